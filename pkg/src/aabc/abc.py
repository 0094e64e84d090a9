"""Rejection ABC: propose from the prior, simulate, accept by summary distance."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Model, simulate_summaries
from .rand import SeedSpec

__all__ = [
    "AcceptanceRule",
    "PosteriorSample",
    "METHOD_TAGS",
    "distance",
    "distances_to",
    "summary_scales",
    "select_accepted",
    "accept_from_table",
    "run_abc",
    "accepted_count",
]

METHOD_TAGS = ("abc", "aabc", "aabc_param_only")


@dataclass(frozen=True)
class AcceptanceRule:
    """Either a fixed tolerance (``kind="epsilon"``) or a top fraction of proposals.

    ``standardize`` divides each summary component by its standard deviation
    over the proposals before taking the Euclidean distance.
    """

    kind: str = "top_percentile"
    epsilon: float | None = None
    fraction: float | None = 0.01
    standardize: bool = False

    def __post_init__(self):
        if self.kind == "epsilon":
            if self.epsilon is None or not self.epsilon >= 0 or math.isnan(self.epsilon):
                raise ValueError(f"epsilon rule needs epsilon >= 0, got {self.epsilon}")
            object.__setattr__(self, "fraction", None)
        elif self.kind == "top_percentile":
            if self.fraction is None or not 0 < self.fraction <= 1:
                raise ValueError(f"top_percentile rule needs fraction in (0, 1], got {self.fraction}")
            object.__setattr__(self, "epsilon", None)
        else:
            raise ValueError(f"unknown acceptance rule kind {self.kind!r}")

    @classmethod
    def tolerance(cls, epsilon: float, standardize: bool = False) -> "AcceptanceRule":
        return cls("epsilon", epsilon=float(epsilon), standardize=standardize)

    @classmethod
    def top(cls, fraction: float = 0.01, standardize: bool = False) -> "AcceptanceRule":
        return cls("top_percentile", fraction=float(fraction), standardize=standardize)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "fraction": self.fraction,
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcceptanceRule":
        kind = d.get("kind", "top_percentile")
        if kind == "epsilon":
            return cls.tolerance(d["epsilon"], bool(d.get("standardize", False)))
        return cls.top(d.get("fraction", 0.01), bool(d.get("standardize", False)))


def accepted_count(fraction: float, total: int) -> int:
    """``ceil(fraction * total)``, immune to products like 0.07 * 100 = 7.000000000000001."""
    return min(total, int(math.ceil(round(fraction * total, 9))))


@dataclass
class PosteriorSample:
    """Accepted parameter vectors, sorted by ascending distance."""

    params: np.ndarray
    distances: np.ndarray
    rule: AcceptanceRule
    proposals_total: int
    method_tag: str
    indices: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=float)
        params = np.asarray(self.params, dtype=float)
        if params.ndim != 2:
            params = params.reshape(len(self.distances), -1)
        self.params = params
        if self.indices is None:
            self.indices = np.arange(len(self.distances))
        if self.method_tag not in METHOD_TAGS:
            raise ValueError(f"unknown method tag {self.method_tag!r}")

    def __len__(self):
        return len(self.distances)

    @property
    def p(self) -> int:
        return self.params.shape[1]

    def header(self) -> dict:
        return {
            "method_tag": self.method_tag,
            "rule": self.rule.to_dict(),
            "M": int(self.proposals_total),
            "accepted": len(self),
            **self.meta,
        }

    def to_csv(self, path=None, p: int | None = None) -> str | None:
        """``# {json header}`` line, then ``theta_1..theta_p,distance`` rows."""
        p = self.p if len(self) else (p or self.meta.get("p") or self.params.shape[1])
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"theta_{j + 1}" for j in range(p)] + ["distance"])
        for theta, d in zip(self.params, self.distances):
            w.writerow([repr(float(v)) for v in theta] + [repr(float(d))])
        text = buf.getvalue()
        if path is None:
            return text
        Path(path).write_text(text)
        return None

    @classmethod
    def from_csv(cls, path) -> "PosteriorSample":
        return cls.parse_csv(Path(path).read_text())

    @classmethod
    def parse_csv(cls, text: str) -> "PosteriorSample":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# "):
            raise ValueError("posterior CSV is missing its '# {...}' header line")
        header = json.loads(lines[0][2:])
        rows = list(csv.reader(lines[1:]))
        columns, body = rows[0], rows[1:]
        p = len(columns) - 1
        values = np.array(body, dtype=float).reshape(len(body), p + 1)
        meta = {k: v for k, v in header.items() if k not in ("method_tag", "rule", "M", "accepted")}
        meta.setdefault("p", p)
        return cls(
            values[:, :p],
            values[:, p],
            AcceptanceRule.from_dict(header["rule"]),
            int(header["M"]),
            header["method_tag"],
            meta=meta,
        )


def distance(a, b, scales=None) -> float:
    """Euclidean distance between two summary vectors, optionally per-component scaled."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"summary vectors must have equal length, got {a.shape} and {b.shape}")
    return float(distances_to(a[None, :], b, scales)[0])


def distances_to(summaries, s_obs, scales=None) -> np.ndarray:
    """Row-wise distances from ``summaries`` ``(M, k)`` to ``s_obs`` ``(k,)``."""
    s = np.asarray(summaries, dtype=float)
    s_obs = np.asarray(s_obs, dtype=float)
    if s.ndim != 2 or s.shape[1] != s_obs.shape[-1]:
        raise ValueError(f"summary length mismatch: {s.shape} vs {s_obs.shape}")
    diff = s - s_obs
    if scales is not None:
        scales = np.asarray(scales, dtype=float)
        if scales.shape != s_obs.shape:
            raise ValueError(f"scales length {scales.shape} does not match summaries {s_obs.shape}")
        if not np.all(scales > 0):
            raise ValueError("scales must be strictly positive")
        diff = diff / scales
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def summary_scales(summaries) -> np.ndarray:
    """Per-component standard deviation over the proposals; constant components get scale 1."""
    s = np.asarray(summaries, dtype=float)
    sd = s.std(axis=0, ddof=1) if s.shape[0] > 1 else np.zeros(s.shape[1])
    return np.where(sd > 0, sd, 1.0)


def select_accepted(distances, rule: AcceptanceRule) -> np.ndarray:
    """Indices of accepted proposals, ordered by distance then by index.

    Under ``epsilon`` a proposal is accepted when its distance is strictly
    below epsilon.  Under ``top_percentile`` exactly ``ceil(fraction * M)``
    indices are returned; ties at the cutoff keep the lower indices.
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("distances must be a non-empty 1-D array")
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    order = np.argsort(d, kind="stable")
    if rule.kind == "epsilon":
        return order[d[order] < rule.epsilon]
    return order[: accepted_count(rule.fraction, d.size)]


def accept_from_table(
    params, summaries, s_obs, rule: AcceptanceRule, method_tag: str, meta=None
) -> PosteriorSample:
    """Apply ``rule`` to a table of proposals and their summaries."""
    params = np.asarray(params, dtype=float)
    summaries = np.asarray(summaries, dtype=float)
    scales = summary_scales(summaries) if rule.standardize else None
    d = distances_to(summaries, s_obs, scales)
    idx = select_accepted(d, rule)
    meta = dict(meta or {})
    meta.setdefault("p", params.shape[1])
    return PosteriorSample(params[idx], d[idx], rule, len(d), method_tag, idx, meta)


def _check_obs(model: Model, s_obs) -> np.ndarray:
    s_obs = np.asarray(s_obs, dtype=float)
    if s_obs.shape != (model.summary_dim,):
        raise ValueError(
            f"observed summary has shape {s_obs.shape}; {model.model_id} produces ({model.summary_dim},)"
        )
    return s_obs


def run_abc(
    model: Model,
    s_obs,
    M: int,
    rule: AcceptanceRule,
    n: int,
    seed: SeedSpec | int,
    workers: int = 1,
) -> PosteriorSample:
    """Rejection ABC with ``M`` prior proposals, each simulated at sample size ``n``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    s_obs = _check_obs(model, s_obs)
    if not isinstance(seed, SeedSpec):
        seed = SeedSpec(int(seed))
    theta, summaries = simulate_summaries(model, M, n, seed.child("abc"), workers)
    return accept_from_table(
        theta, summaries, s_obs, rule, "abc", {"seed": seed.to_dict(), "model_id": model.model_id}
    )
