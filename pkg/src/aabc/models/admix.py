"""Admixture-fraction propagation in a hybrid population of constant size N.

Generation 1 is founded from sources A (fraction 1) and B (fraction 0) with
equal probability.  In every later generation each of the N individuals gets
two parents chosen independently: source A with probability ``p_A``, source B
with ``p_B``, or a uniformly random member of the previous hybrid generation
with ``p_H``.  A child's fraction is the mean of its parents' fractions.
After ``t`` generations, ``n`` individuals are sampled without replacement.

Only the current and previous generations are held in memory, so one data set
costs O(N * t) time.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..model import Model, ModelError, register_model
from ..rand import draw_dirichlet

__all__ = [
    "AdmixConfig",
    "AdmixtureModel",
    "PRESETS",
    "found_population",
    "step_generation",
    "propagate",
    "simulate_admix",
    "summarize_admix",
]

_VAR_FLOOR = 1e-12
_SUM_TOL = 1e-12


@dataclass(frozen=True)
class AdmixConfig:
    N: int = 10_000
    t: int = 771
    n: int = 604

    def __post_init__(self):
        if self.N < 2 or self.t < 1 or not 1 <= self.n <= self.N:
            raise ModelError(f"need N >= 2, t >= 1, 1 <= n <= N; got {self}")


PRESETS = {
    "full": AdmixConfig(N=10_000, t=771, n=604),
    "decomposition": AdmixConfig(N=10_000, t=30, n=604),
    "toy": AdmixConfig(N=500, t=10, n=200),
}


def _check_rates(params) -> np.ndarray:
    p = np.asarray(params, dtype=float)
    if p.shape[-1] != 3:
        raise ModelError(f"admixture rates need 3 components, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ModelError(f"admixture rates must be finite and nonnegative: {p.tolist()}")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > _SUM_TOL):
        raise ModelError(f"admixture rates must sum to 1: {p.tolist()}")
    return p


def found_population(N: int, rng: np.random.Generator, batch: int | None = None) -> np.ndarray:
    """Founding generation: both parents from A or B with probability 1/2 each."""
    shape = (N,) if batch is None else (batch, N)
    parents_a = rng.random(shape + (2,)) < 0.5
    return parents_a.mean(axis=-1)


def step_generation(pop: np.ndarray, params, rng: np.random.Generator) -> np.ndarray:
    """One generation of random mating with source immigration.

    ``pop`` is ``(N,)`` with ``params`` ``(3,)``, or ``(B, N)`` with ``params``
    ``(B, 3)`` for B independent populations.
    """
    pop = np.asarray(pop, dtype=float)
    rates = _check_rates(params)
    single = pop.ndim == 1
    if single:
        pop, rates = pop[None, :], rates[None, :]
    B, N = pop.shape
    p_a = rates[:, 0, None, None]
    p_ab = (rates[:, 0] + rates[:, 1])[:, None, None]
    u = rng.random((B, N, 2))
    pick = rng.integers(0, N, size=(B, N, 2))
    from_hybrid = np.take_along_axis(pop, pick.reshape(B, -1), axis=1).reshape(B, N, 2)
    parents = np.where(u < p_a, 1.0, np.where(u < p_ab, 0.0, from_hybrid))
    child = parents.mean(axis=-1)
    return child[0] if single else child


def propagate(params, N: int, t: int, rng: np.random.Generator) -> np.ndarray:
    """Found, then run ``t - 1`` generations; returns the final population(s)."""
    rates = _check_rates(params)
    batch = None if rates.ndim == 1 else rates.shape[0]
    pop = found_population(N, rng, batch)
    for _ in range(t - 1):
        pop = step_generation(pop, rates, rng)
    return pop


def simulate_admix(params, config: AdmixConfig, rng: np.random.Generator, n: int | None = None):
    """Sampled fractions after ``config.t`` generations; shape ``(n, 1)`` or ``(B, n, 1)``."""
    n = config.n if n is None else n
    if not 1 <= n <= config.N:
        raise ModelError(f"sample size n={n} must lie in [1, N={config.N}]")
    pop = propagate(params, config.N, config.t, rng)
    keys = rng.random(pop.shape)
    chosen = np.argsort(keys, axis=-1)[..., :n]
    return np.take_along_axis(pop, chosen, axis=-1)[..., None]


def summarize_admix(data) -> np.ndarray:
    """Sample mean, unbiased variance, skewness and excess kurtosis of the fractions.

    Skewness and kurtosis use the biased central moments (``m3 / m2**1.5`` and
    ``m4 / m2**2 - 3``) and are set to 0 when the variance is below 1e-12.
    Accepts ``(n, 1)`` or a batch ``(B, n, 1)``.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim < 2 or x.shape[-1] != 1:
        raise ModelError(f"admixture data must have shape (n, 1), got {x.shape}")
    x = x[..., 0]
    n = x.shape[-1]
    if n < 2:
        raise ModelError("admixture summaries need n >= 2")
    if not np.all(np.isfinite(x)):
        raise ModelError("admixture fractions contain non-finite values")
    mean = x.mean(axis=-1)
    dev = x - mean[..., None]
    m2 = (dev**2).mean(axis=-1)
    m3 = (dev**3).mean(axis=-1)
    m4 = (dev**4).mean(axis=-1)
    var = m2 * n / (n - 1)
    flat = var < _VAR_FLOOR
    safe_m2 = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, m3 / safe_m2**1.5)
    kurt = np.where(flat, 0.0, m4 / safe_m2**2 - 3.0)
    return np.stack([mean, np.where(flat, 0.0, var), skew, kurt], axis=-1)


class AdmixtureModel(Model):
    """Parameters ``(p_A, p_B, p_H)`` with a Dirichlet(1, 1, 1) prior."""

    model_id = "admix"
    param_dim = 3
    obs_dim = 1
    summary_dim = 4
    param_names = ("p_A", "p_B", "p_H")

    def __init__(self, N=10_000, t=771, n=604):
        self.cfg = AdmixConfig(int(N), int(t), int(n))
        self.default_n = self.cfg.n

    @classmethod
    def preset(cls, name: str) -> "AdmixtureModel":
        try:
            return cls(**asdict(PRESETS[name]))
        except KeyError:
            raise ModelError(f"unknown admix preset {name!r}; choose from {sorted(PRESETS)}") from None

    def config(self) -> dict:
        return asdict(self.cfg)

    def prior_bounds(self) -> np.ndarray:
        return np.array([[0.0, 1.0]] * 3)

    def sample_prior(self, rng, size=None):
        return draw_dirichlet(np.ones(3), rng, size=size)

    def in_support(self, params) -> bool:
        p = np.asarray(params, dtype=float)
        return bool(
            np.all(np.isfinite(p)) and np.all(p >= 0) and abs(p.sum() - 1.0) <= _SUM_TOL
        )

    def simulate(self, params, n, rng):
        theta = self.check_params(params)
        return simulate_admix(theta, self.cfg, rng, n)

    def simulate_many(self, params, n, rng):
        rates = _check_rates(np.atleast_2d(params))
        return simulate_admix(rates, self.cfg, rng, n)

    def summarize(self, data):
        x = np.asarray(data, dtype=float)
        if x.ndim != 2:
            raise ModelError("data must be an (n, 1) array")
        return summarize_admix(x)

    def summarize_many(self, data):
        return summarize_admix(data)


@register_model("admix")
def _make_admix(**config) -> AdmixtureModel:
    return AdmixtureModel(**config)
