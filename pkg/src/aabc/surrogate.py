"""AABC by rejection: nearest pooled parameter plus Dirichlet-weighted resampling.

For a prior proposal ``theta*`` the engine finds the pooled realization whose
parameter is closest in Euclidean distance, draws one weight vector
``phi ~ Dirichlet(1, ..., 1)`` over that realization's ``n`` observations and
builds a new data set of ``n`` i.i.d. draws from those observations with
probabilities ``phi``.  The parameter-only variant skips the resampling and
runs the mechanistic simulator at the matched parameter instead.

Proposals are processed in fixed-size blocks with per-block streams.  The
prior draws come from a stream that does not depend on the variant, so
``run_aabc`` and ``run_aabc_param_only`` called with the same seed propose the
same ``theta*`` values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .abc import AcceptanceRule, PosteriorSample, _check_obs, accept_from_table
from .model import BLOCK_SIZE, Model, ReferenceSet
from .parallel import parallel_map
from .rand import SeedSpec, StreamLike, as_generator, draw_categorical_rows

__all__ = [
    "NearestMatch",
    "nearest_parameter",
    "nearest_indices",
    "resample_dataset",
    "resample_many",
    "surrogate_proposals",
    "run_aabc",
    "run_aabc_param_only",
    "prior_range_scales",
]

# Bounds the (queries x pool) distance matrix held at once.
_SCAN_CELLS = 1 << 22


@dataclass(frozen=True)
class NearestMatch:
    index: int
    theta_tilde: np.ndarray
    distance: float


def nearest_indices(queries, pool_params, scales=None):
    """Exact nearest pooled parameter for each query, by linear scan.

    Returns ``(indices, distances)``.  Squared distances are accumulated one
    coordinate at a time; ties go to the lowest pool index.  ``scales``
    divides each coordinate before comparison.
    """
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    P = np.atleast_2d(np.asarray(pool_params, dtype=float))
    if P.shape[0] == 0:
        raise ValueError("pool is empty")
    if q.shape[1] != P.shape[1]:
        raise ValueError(f"query dimension {q.shape[1]} does not match pool dimension {P.shape[1]}")
    if scales is not None:
        scales = np.asarray(scales, dtype=float)
        if scales.shape != (P.shape[1],) or not np.all(scales > 0):
            raise ValueError("parameter scales must be positive, one per dimension")
        q = q / scales
        P = P / scales
    m, p = P.shape
    idx = np.empty(q.shape[0], dtype=np.intp)
    d2min = np.empty(q.shape[0])
    chunk = max(1, _SCAN_CELLS // m)
    for s in range(0, q.shape[0], chunk):
        qc = q[s : s + chunk]
        d2 = np.zeros((qc.shape[0], m))
        for j in range(p):
            diff = qc[:, j, None] - P[None, :, j]
            d2 += diff * diff
        best = d2.argmin(axis=1)
        idx[s : s + chunk] = best
        d2min[s : s + chunk] = d2[np.arange(qc.shape[0]), best]
    return idx, np.sqrt(d2min)


def nearest_parameter(query, pool, scales=None) -> NearestMatch:
    """Nearest pooled parameter to ``query``; ``pool`` is a ReferenceSet or ``(m, p)`` array."""
    params = pool.params if isinstance(pool, ReferenceSet) else np.asarray(pool, dtype=float)
    query = np.asarray(query, dtype=float)
    if query.ndim != 1:
        raise ValueError("query must be a single parameter vector")
    idx, dist = nearest_indices(query[None, :], params, scales)
    i = int(idx[0])
    return NearestMatch(i, params[i].copy(), float(dist[0]))


def resample_many(pool_data: np.ndarray, indices, rng: np.random.Generator) -> np.ndarray:
    """One surrogate data set per entry of ``indices``; shape ``(B, n, d_obs)``.

    Each row gets its own ``phi ~ Dirichlet(1, ..., 1)`` over the ``n`` slots
    of the matched data set (duplicate values keep separate slots), then ``n``
    i.i.d. slot draws with probabilities ``phi``.
    """
    indices = np.asarray(indices, dtype=np.intp)
    n = pool_data.shape[1]
    if n == 1:
        return pool_data[indices].copy()
    phi = rng.standard_exponential((indices.size, n))
    phi /= phi.sum(axis=1, keepdims=True)
    slots = draw_categorical_rows(phi, n, rng)
    return pool_data[indices[:, None], slots]


def resample_dataset(match, pool: ReferenceSet, stream: StreamLike) -> np.ndarray:
    """Surrogate data set ``(n, d_obs)`` resampled from the matched realization."""
    index = match.index if isinstance(match, NearestMatch) else int(match)
    if not 0 <= index < pool.m:
        raise IndexError(f"match index {index} outside pool of size {pool.m}")
    return resample_many(pool.data, [index], as_generator(stream))[0]


def prior_range_scales(model: Model) -> np.ndarray:
    """Per-dimension prior widths, for scaling the parameter-space distance."""
    bounds = model.prior_bounds()
    if bounds is None:
        raise ValueError(f"{model.model_id} has no prior box to scale by")
    width = np.asarray(bounds, dtype=float)[:, 1] - np.asarray(bounds, dtype=float)[:, 0]
    return np.where(width > 0, width, 1.0)


def _resolve_scales(model, param_scales):
    if isinstance(param_scales, str):
        if param_scales != "prior_range":
            raise ValueError(f"unknown parameter scaling {param_scales!r}")
        return prior_range_scales(model)
    return param_scales


def _proposal_block(pool: ReferenceSet, task):
    model, mode, n, seed, start, stop, scales = task
    rng_theta = seed.child("proposal", start).generator()
    theta = model.sample_prior(rng_theta, size=stop - start)
    idx, gap = nearest_indices(theta, pool.params, scales)
    rng_data = seed.child(mode, start).generator()
    if mode == "resample":
        data = resample_many(pool.data, idx, rng_data)
    else:
        data = model.simulate_many(pool.params[idx], n, rng_data)
    return theta, model.summarize_many(data), idx, gap


def surrogate_proposals(
    model: Model,
    pool: ReferenceSet,
    M: int,
    seed: SeedSpec,
    mode: str = "resample",
    n: int | None = None,
    param_scales=None,
    workers: int = 1,
):
    """Generate ``M`` AABC proposals without applying an acceptance rule.

    ``mode="resample"`` builds data by Dirichlet resampling of the matched
    realization; ``mode="simulate"`` runs the mechanistic model at the
    matched parameter with sample size ``n``.  Returns
    ``(theta_star, summaries, matched_index, parameter_gap)``.
    ``param_scales`` is ``None`` (raw Euclidean), a vector of positive
    per-dimension scales, or ``"prior_range"``.
    """
    if mode not in ("resample", "simulate"):
        raise ValueError(f"unknown proposal mode {mode!r}")
    if M < 1:
        raise ValueError("M must be >= 1")
    if not isinstance(pool, ReferenceSet):
        raise TypeError("pool must be a ReferenceSet")
    pool.check_model(model)
    if pool.p != model.param_dim:
        raise ValueError(f"pool parameter dimension {pool.p} != model dimension {model.param_dim}")
    n = pool.n if n is None else int(n)
    param_scales = _resolve_scales(model, param_scales)
    tasks = [
        (model, mode, n, seed, start, min(start + BLOCK_SIZE, M), param_scales)
        for start in range(0, M, BLOCK_SIZE)
    ]
    parts = parallel_map(_proposal_block, tasks, workers, shared=pool)
    return tuple(np.concatenate([part[i] for part in parts]) for i in range(4))


def _run(model, s_obs, pool, M, rule, seed, mode, n, param_scales, workers, tag):
    s_obs = _check_obs(model, s_obs)
    if not isinstance(seed, SeedSpec):
        seed = SeedSpec(int(seed))
    theta, summaries, idx, gap = surrogate_proposals(
        model, pool, M, seed, mode, n, param_scales, workers
    )
    meta = {
        "seed": seed.to_dict(),
        "model_id": model.model_id,
        "pool_m": pool.m,
        "mean_parameter_gap": float(gap.mean()),
    }
    return accept_from_table(theta, summaries, s_obs, rule, tag, meta)


def run_aabc(
    model: Model,
    s_obs,
    pool: ReferenceSet,
    M: int,
    rule: AcceptanceRule,
    seed: SeedSpec | int,
    param_scales=None,
    workers: int = 1,
) -> PosteriorSample:
    """AABC by rejection with ``M`` proposals against ``pool``."""
    return _run(model, s_obs, pool, M, rule, seed, "resample", None, param_scales, workers, "aabc")


def run_aabc_param_only(
    model: Model,
    s_obs,
    pool: ReferenceSet,
    M: int,
    rule: AcceptanceRule,
    n: int | None,
    seed: SeedSpec | int,
    param_scales=None,
    workers: int = 1,
) -> PosteriorSample:
    """Parameter-space-only AABC: match the nearest pooled parameter, then simulate there."""
    return _run(
        model, s_obs, pool, M, rule, seed, "simulate", n, param_scales, workers, "aabc_param_only"
    )
