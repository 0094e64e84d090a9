"""Seeded, splittable random streams and the basic draws built on them.

Every stochastic routine in the package takes a :class:`SeedSpec` (or a
``numpy.random.Generator`` made from one).  A ``SeedSpec`` is a plain value:
``(root_seed, stream_id)`` always maps to the same PCG64 stream, and child
streams are derived by hashing a task kind and index into a new
``stream_id``.  Nothing here holds global state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "SeedSpec",
    "as_generator",
    "draw_uniform",
    "draw_dirichlet",
    "draw_categorical",
    "draw_categorical_rows",
]

_MASK64 = (1 << 64) - 1


def _hash64(*parts: object) -> int:
    text = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class SeedSpec:
    """A reproducible random stream identifier.

    Parameters
    ----------
    root_seed : int
        Experiment-wide seed (64-bit unsigned).
    stream_id : int
        Identifies one stream under the root; derived with :meth:`child`.
    """

    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("root_seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= value <= _MASK64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value!r}")

    def child(self, kind: str, *index: int) -> "SeedSpec":
        """Derive an independent stream for task ``kind`` at ``index``."""
        return SeedSpec(self.root_seed, _hash64(self.stream_id, kind, *index))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=int(self.root_seed),
            spawn_key=(int(self.stream_id) & 0xFFFFFFFF, int(self.stream_id) >> 32),
        )
        return np.random.Generator(np.random.PCG64(seq))

    def to_dict(self) -> dict:
        return {"root_seed": int(self.root_seed), "stream_id": int(self.stream_id)}

    @classmethod
    def from_dict(cls, d: dict) -> "SeedSpec":
        return cls(int(d["root_seed"]), int(d.get("stream_id", 0)))


StreamLike = Union[SeedSpec, np.random.Generator]


def as_generator(stream: StreamLike) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, SeedSpec):
        return stream.generator()
    raise TypeError(f"expected SeedSpec or numpy Generator, got {type(stream).__name__}")


def draw_uniform(lo: float, hi: float, rng: np.random.Generator, size=None):
    """Uniform draw(s) on ``[lo, hi)``."""
    if not lo < hi:
        raise ValueError(f"invalid bounds: lo={lo} must be < hi={hi}")
    return rng.uniform(lo, hi, size=size)


def draw_dirichlet(alphas, rng: np.random.Generator, size=None) -> np.ndarray:
    """Dirichlet draw(s) via independent Gamma(alpha_i, 1) variates normalized by their sum.

    Returns an array of shape ``(d,)`` or ``size + (d,)``; each point sums to 1.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or alphas.size < 2:
        raise ValueError("Dirichlet needs a 1-D vector of at least 2 concentration parameters")
    if not np.all(alphas > 0) or not np.all(np.isfinite(alphas)):
        raise ValueError(f"Dirichlet parameters must be positive and finite, got {alphas}")
    shape = (alphas.size,) if size is None else tuple(np.atleast_1d(size)) + (alphas.size,)
    if np.all(alphas == 1.0):
        g = rng.standard_exponential(shape)
    else:
        g = rng.standard_gamma(np.broadcast_to(alphas, shape))
    return g / g.sum(axis=-1, keepdims=True)


def draw_categorical(weights, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. indices in ``[0, len(weights))`` drawn with probabilities ``weights``."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D vector")
    if count < 1:
        raise ValueError("count must be >= 1")
    return draw_categorical_rows(w[None, :], count, rng)[0]


def draw_categorical_rows(weights: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Row-wise categorical sampling: ``count`` draws for each row of ``weights``.

    ``weights`` has shape ``(B, d)`` with rows on the simplex; returns ``(B, count)``
    integer indices.  Inverse-CDF on the row cumulative sums; zero-weight cells
    are never selected.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[1] == 0:
        raise ValueError("weights must be a (B, d) array with d >= 1")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    B, d = w.shape
    cdf = np.cumsum(w, axis=1)
    total = cdf[:, -1:].copy()
    if np.any(total <= 0):
        raise ValueError("each weight row must have positive mass")
    u = rng.random((B, count)) * total
    # Offsetting each row by its index turns B searches into one sorted search.
    offsets = np.arange(B, dtype=float)[:, None] * (1.0 + float(total.max()))
    flat_cdf = (cdf + offsets).ravel()
    idx = np.searchsorted(flat_cdf, (u + offsets).ravel(), side="right").reshape(B, count)
    idx -= (np.arange(B) * d)[:, None]
    # Guard against u == total at float precision; also skips trailing zero-mass cells.
    last_pos = d - 1 - np.argmax(w[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last_pos[:, None])
