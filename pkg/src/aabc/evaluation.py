"""Replicate test-set studies and accuracy metrics.

A study builds one reference set, draws test ``(data, truth)`` pairs from it
without replacement and, for every pool size ``m`` in a grid, runs each
requested method on every test set.  Posterior accuracy per parameter
component is the RSSE

    rsse = (1 / r) * sqrt(sum_j (alpha_j - truth) ** 2 / var(alpha))

with ``var`` the sample variance (``ddof=1``) of the ``r`` accepted values,
averaged over test sets into an RMSE.

Methods at pool size ``m``:

* ``abc``: the ``m`` pooled realizations are the proposals, as if only ``m``
  mechanistic simulations were affordable.  The baseline for percent excess
  is ABC on the whole reference set.
* ``aabc``: ``M`` prior proposals, each resampled from its nearest pooled
  realization.
* ``aabc_param_only``: the same ``M`` proposals, simulated mechanistically at
  the matched pooled parameter.

Proposal tables for the surrogate methods are generated once per ``m`` and
shared by all test sets; only the acceptance step depends on the test set.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import stats

from .abc import METHOD_TAGS, AcceptanceRule, PosteriorSample, accepted_count, distances_to
from .abc import run_abc, select_accepted, summary_scales
from .model import Model, ReferenceSet, build_reference_set
from .rand import SeedSpec
from .surrogate import run_aabc, surrogate_proposals

__all__ = [
    "rsse",
    "rsse_components",
    "rmse",
    "RMSE",
    "percent_excess",
    "posterior_distance",
    "StudyConfig",
    "ReportRow",
    "AccuracyReport",
    "run_study",
    "convergence_distances",
    "REPORT_COLUMNS",
    "write_manifest",
]

REPORT_COLUMNS = (
    "method",
    "m",
    "component",
    "rmse",
    "n_contributing",
    "percent_excess",
    "n_undefined",
    "n_empty",
    "mean_accepted",
    "median_accepted",
    "mean_posterior_variance",
)


def rsse_components(accepted, truth) -> np.ndarray:
    """RSSE of each column of ``accepted`` ``(r, p)`` against ``truth`` ``(p,)``.

    Entries are NaN (undefined) when ``r < 2`` or the column has zero variance.
    """
    a = np.asarray(accepted, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    truth = np.broadcast_to(np.asarray(truth, dtype=float), (a.shape[1],))
    r = a.shape[0]
    if r < 2:
        return np.full(a.shape[1], np.nan)
    var = a.var(axis=0, ddof=1)
    sse = ((a - truth) ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sqrt(sse / var) / r
    return np.where(var > 0, out, np.nan)


def rsse(accepted, truth: float) -> float:
    """RSSE of one parameter component; NaN when undefined (``r < 2`` or zero variance)."""
    a = np.asarray(accepted, dtype=float)
    if a.ndim != 1:
        raise ValueError("rsse expects a 1-D vector of accepted values")
    return float(rsse_components(a[:, None], truth)[0])


class RMSE(NamedTuple):
    value: float
    n_contributing: int
    n_excluded: int


def rmse(rsse_values) -> RMSE:
    """Mean of the defined (finite) RSSE values, with the exclusion count."""
    v = np.asarray(rsse_values, dtype=float).ravel()
    ok = np.isfinite(v)
    if not ok.any():
        raise ValueError("no defined RSSE values to average")
    return RMSE(float(v[ok].mean()), int(ok.sum()), int((~ok).sum()))


def percent_excess(rmse_method: float, rmse_abc: float) -> float:
    """``100 * |rmse_method - rmse_abc| / rmse_abc``."""
    if not rmse_abc > 0:
        raise ValueError(f"baseline RMSE must be positive, got {rmse_abc}")
    return 100.0 * abs(rmse_method - rmse_abc) / rmse_abc


def posterior_distance(sample_a, sample_b, component: int) -> float:
    """Two-sample Kolmogorov-Smirnov statistic between one marginal of two posteriors."""
    a = sample_a.params if isinstance(sample_a, PosteriorSample) else np.asarray(sample_a)
    b = sample_b.params if isinstance(sample_b, PosteriorSample) else np.asarray(sample_b)
    a = np.asarray(a, dtype=float).reshape(len(a), -1)[:, component]
    b = np.asarray(b, dtype=float).reshape(len(b), -1)[:, component]
    if a.size == 0 or b.size == 0:
        raise ValueError("posterior_distance needs two non-empty samples")
    return float(stats.ks_2samp(a, b).statistic)


@dataclass(frozen=True)
class StudyConfig:
    """Settings of a replicate study.

    ``M_proposals`` is the number of prior proposals per surrogate run and
    defaults to ``M_reference``.  ``n`` is the data-set size (model default
    when ``None``).  When ``epsilon_fraction`` is set the acceptance rule must
    be of kind ``epsilon`` and each test set gets its own tolerance, placed
    so that ABC on the full reference set accepts ``ceil(fraction * M)``
    proposals.
    """

    M_reference: int
    n_test_sets: int
    m_grid: tuple
    acceptance: AcceptanceRule = field(default_factory=AcceptanceRule)
    methods: tuple = METHOD_TAGS
    n: int | None = None
    M_proposals: int | None = None
    epsilon_fraction: float | None = None
    param_scales: tuple | str | None = None

    def __post_init__(self):
        grid = tuple(int(m) for m in self.m_grid)
        object.__setattr__(self, "m_grid", grid)
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.M_reference < 1:
            raise ValueError("M_reference must be >= 1")
        if self.n_test_sets < 1 or self.n_test_sets > self.M_reference:
            raise ValueError(f"n_test_sets must lie in [1, M_reference], got {self.n_test_sets}")
        if not grid:
            raise ValueError("m_grid is empty")
        bad = [m for m in grid if not 1 <= m <= self.M_reference]
        if bad:
            raise ValueError(f"m_grid values {bad} outside [1, M_reference={self.M_reference}]")
        unknown = set(self.methods) - set(METHOD_TAGS)
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHOD_TAGS}, got {self.methods}")
        if self.epsilon_fraction is not None:
            if self.acceptance.kind != "epsilon":
                raise ValueError("epsilon_fraction requires an epsilon acceptance rule")
            if not 0 < self.epsilon_fraction < 1:
                raise ValueError("epsilon_fraction must lie in (0, 1)")
        if self.M_proposals is not None and self.M_proposals < 1:
            raise ValueError("M_proposals must be >= 1")

    def to_dict(self) -> dict:
        return {
            "M_reference": self.M_reference,
            "n_test_sets": self.n_test_sets,
            "m_grid": list(self.m_grid),
            "acceptance": self.acceptance.to_dict(),
            "methods": list(self.methods),
            "n": self.n,
            "M_proposals": self.M_proposals,
            "epsilon_fraction": self.epsilon_fraction,
            "param_scales": (
                list(self.param_scales) if isinstance(self.param_scales, tuple) else self.param_scales
            ),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = dict(d)
        acc = dict(d.get("acceptance", {}))
        if d.get("epsilon_fraction") is not None and acc.get("kind") == "epsilon":
            # the calibrated tolerance replaces any fixed value
            acc.setdefault("epsilon", math.inf)
            if acc["epsilon"] is None:
                acc["epsilon"] = math.inf
        d["acceptance"] = AcceptanceRule.from_dict(acc)
        for key in ("m_grid", "methods", "param_scales"):
            if isinstance(d.get(key), list):
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class ReportRow:
    method: str
    m: int
    component: str
    rmse: float
    n_contributing: int
    percent_excess: float
    n_undefined: int
    n_empty: int
    mean_accepted: float
    median_accepted: float
    mean_posterior_variance: float


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


@dataclass
class AccuracyReport:
    """Per ``(method, m, component)`` accuracy, plus the per-test accepted counts."""

    rows: list
    config: StudyConfig
    model_id: str
    model_config: dict
    seed: dict
    baseline: dict = field(default_factory=dict)
    accepted_counts: dict = field(default_factory=dict)
    pool_indices: dict = field(default_factory=dict)
    test_indices: np.ndarray = None
    components: list = field(default_factory=list)

    def cell(self, method: str, m: int, component) -> ReportRow:
        """Row for ``component`` given by name or by index."""
        if isinstance(component, (int, np.integer)):
            component = self.components[component]
        for row in self.rows:
            if row.method == method and row.m == m and row.component == component:
                return row
        raise KeyError((method, m, component))

    def series(self, method: str, component) -> list:
        """``(m, rmse)`` pairs over the grid for one method and component."""
        return [(m, self.cell(method, m, component).rmse) for m in self.config.m_grid]

    def to_csv(self, path=None) -> str | None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(getattr(row, c)) for c in REPORT_COLUMNS])
        text = buf.getvalue()
        if path is None:
            return text
        Path(path).write_text(text)
        return None

    def manifest(self) -> dict:
        return {
            "model_id": self.model_id,
            "model_config": self.model_config,
            "seed": self.seed,
            "study": self.config.to_dict(),
            "baseline_rmse": self.baseline,
        }

    @staticmethod
    def read_csv(path) -> list:
        """Rows of a report CSV as dicts with numeric fields converted."""
        out = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                for key, val in rec.items():
                    if key in ("method", "component"):
                        continue
                    rec[key] = float(val) if val != "" else math.nan
                rec["m"] = int(rec["m"])
                out.append(rec)
        return out


def _calibrated_epsilon(d_sorted: np.ndarray, k: int) -> float:
    # Midway between the k-th and (k+1)-th smallest distance, so that the
    # strict "<" rule keeps exactly k proposals when there are no ties.
    if k >= d_sorted.size:
        return math.inf
    return 0.5 * (d_sorted[k - 1] + d_sorted[k])


def _score(params, summaries, s_obs, truths, rules, scales):
    """Accept for every test set; returns per-test RSSE ``(T, p)``, counts and variances."""
    T, p = truths.shape
    out = np.full((T, p), np.nan)
    counts = np.zeros(T, dtype=int)
    variances = np.full((T, p), np.nan)
    for i in range(T):
        d = distances_to(summaries, s_obs[i], scales)
        idx = select_accepted(d, rules[i])
        counts[i] = idx.size
        acc = params[idx]
        out[i] = rsse_components(acc, truths[i])
        if idx.size >= 2:
            variances[i] = acc.var(axis=0, ddof=1)
    return out, counts, variances


def run_study(
    model: Model,
    config: StudyConfig,
    seed: SeedSpec | int,
    reference: ReferenceSet | None = None,
    workers: int = 1,
) -> AccuracyReport:
    """Run the replicate study described by ``config``.

    ``reference`` may be a prebuilt reference set of size ``M_reference``;
    otherwise one is simulated from ``seed``.
    """
    if not isinstance(seed, SeedSpec):
        seed = SeedSpec(int(seed))
    n = config.n or model.default_n
    M = config.M_reference
    if reference is None:
        reference = build_reference_set(model, M, n, seed, workers)
    else:
        reference.check_model(model)
        if reference.m != M:
            raise ValueError(f"reference set has m={reference.m}, config says M_reference={M}")
        n = reference.n
    M_prop = config.M_proposals or M
    ref_summ = model.summarize_many(reference.data)
    scales = summary_scales(ref_summ) if config.acceptance.standardize else None
    pscales = config.param_scales
    if isinstance(pscales, tuple):
        pscales = np.asarray(pscales, dtype=float)

    test_idx = seed.child("tests").generator().choice(M, config.n_test_sets, replace=False)
    s_obs = ref_summ[test_idx]
    truths = reference.params[test_idx]

    rule = config.acceptance
    if config.epsilon_fraction is not None:
        k = accepted_count(config.epsilon_fraction, M)
        rules = []
        for s in s_obs:
            d = np.sort(distances_to(ref_summ, s, scales))
            rules.append(AcceptanceRule.tolerance(_calibrated_epsilon(d, k), rule.standardize))
    else:
        rules = [rule] * config.n_test_sets

    names = list(model.param_names) or [f"theta_{j + 1}" for j in range(reference.p)]
    report = AccuracyReport(
        [], config, model.model_id, model.config(), seed.to_dict(), test_indices=test_idx, components=names
    )

    baseline = None
    if "abc" in config.methods:
        base_rsse, base_counts, _ = _score(reference.params, ref_summ, s_obs, truths, rules, scales)
        baseline = []
        for j in range(reference.p):
            try:
                baseline.append(rmse(base_rsse[:, j]).value)
            except ValueError:
                baseline.append(math.nan)
        report.baseline = dict(zip(names, baseline))
        report.accepted_counts[("abc", M)] = base_counts

    for m in config.m_grid:
        if m == M:
            pool_idx = np.arange(M)
        else:
            pool_idx = seed.child("pool", m).generator().choice(M, m, replace=False)
        report.pool_indices[m] = pool_idx
        pool = reference.subset(pool_idx)
        for method in METHOD_TAGS:
            if method not in config.methods:
                continue
            if method == "abc":
                theta, summ = pool.params, ref_summ[pool_idx]
            else:
                mode = "resample" if method == "aabc" else "simulate"
                theta, summ, _, _ = surrogate_proposals(
                    model, pool, M_prop, seed.child("proposals", m), mode, n, pscales, workers
                )
            values, counts, variances = _score(theta, summ, s_obs, truths, rules, scales)
            report.accepted_counts[(method, m)] = counts
            for j, name in enumerate(names):
                col = values[:, j]
                defined = np.isfinite(col)
                value = float(col[defined].mean()) if defined.any() else math.nan
                excess = math.nan
                if baseline is not None and baseline[j] > 0 and not math.isnan(value):
                    excess = percent_excess(value, baseline[j])
                v = variances[:, j]
                report.rows.append(
                    ReportRow(
                        method=method,
                        m=int(m),
                        component=name,
                        rmse=value,
                        n_contributing=int(defined.sum()),
                        percent_excess=excess,
                        n_undefined=int((~defined & (counts > 0)).sum()),
                        n_empty=int((counts == 0).sum()),
                        mean_accepted=float(counts.mean()),
                        median_accepted=float(np.median(counts)),
                        mean_posterior_variance=float(np.nanmean(v)) if np.isfinite(v).any() else math.nan,
                    )
                )
    return report


def convergence_distances(
    model: Model,
    s_obs,
    m_grid,
    M: int,
    rule: AcceptanceRule,
    seed: SeedSpec | int,
    n: int | None = None,
    workers: int = 1,
):
    """KS distance per component between AABC at each pool size and one ABC posterior.

    ABC uses ``M`` fresh mechanistic simulations.  The pools are
    without-replacement subsamples of one independently simulated reference
    set of size ``max(m_grid)``, and every AABC run uses the same ``M`` prior
    proposals.  Returns ``(distances, abc_sample, aabc_samples)`` with
    ``distances`` of shape ``(len(m_grid), p)``.
    """
    if not isinstance(seed, SeedSpec):
        seed = SeedSpec(int(seed))
    n = n or model.default_n
    grid = [int(m) for m in m_grid]
    abc_post = run_abc(model, s_obs, M, rule, n, seed.child("abc-baseline"), workers)
    big = build_reference_set(model, max(grid), n, seed.child("pools"), workers)
    out = np.zeros((len(grid), model.param_dim))
    samples = {}
    for i, m in enumerate(grid):
        if m == big.m:
            pool = big
        else:
            pool = big.subset(seed.child("pool", m).generator().choice(big.m, m, replace=False))
        post = run_aabc(model, s_obs, pool, M, rule, seed.child("aabc"), workers=workers)
        samples[m] = post
        out[i] = [posterior_distance(post, abc_post, j) for j in range(model.param_dim)]
    return out, abc_post, samples


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(type(o))


def write_manifest(report: AccuracyReport, path) -> None:
    Path(path).write_text(json.dumps(report.manifest(), sort_keys=True, indent=2, default=_json_default) + "\n")
