"""Generative-model interface and the reference-set pool shared by both engines.

A model bundles a prior, a mechanistic simulator and a summary statistic.
Parameter vectors, observations and data sets are plain numpy arrays:

* parameters: shape ``(p,)``
* data set: shape ``(n, d_obs)``, one row per i.i.d. observation
* summary: shape ``(k,)``

Simulation happens in blocks of consecutive realization indices, each with its
own derived stream, so output does not depend on how blocks are scheduled.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .parallel import parallel_map
from .rand import SeedSpec

__all__ = [
    "Model",
    "ModelError",
    "PoolFormatError",
    "ReferenceSet",
    "register_model",
    "make_model",
    "registered_models",
    "build_reference_set",
    "simulate_blocks",
    "simulate_summaries",
    "save_reference_set",
    "load_reference_set",
    "export_reference_csv",
    "BLOCK_SIZE",
]

BLOCK_SIZE = 256
POOL_MAGIC = "AABC-POOL"
POOL_FORMAT_VERSION = 1


class ModelError(ValueError):
    """Invalid parameters or data for a model."""


class PoolFormatError(ValueError):
    """A pool file is malformed or does not match the requested model."""


class Model:
    """Base class for mechanistic models.

    Subclasses set ``model_id``, ``param_dim``, ``obs_dim``, ``summary_dim``
    and ``param_names`` and implement the abstract methods.  ``simulate_many``
    and ``summarize_many`` have loop fallbacks; models override them with
    vectorized versions when it pays.
    """

    model_id: str = ""
    param_dim: int = 0
    obs_dim: int = 0
    summary_dim: int = 0
    param_names: tuple = ()
    default_n: int = 1

    def config(self) -> dict:
        """Fixed hyperparameters; serialized into pool headers."""
        raise NotImplementedError

    def sample_prior(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def in_support(self, params) -> bool:
        raise NotImplementedError

    def simulate(self, params, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def summarize(self, data) -> np.ndarray:
        raise NotImplementedError

    def simulate_many(self, params: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.stack([self.simulate(theta, n, rng) for theta in params])

    def summarize_many(self, data: np.ndarray) -> np.ndarray:
        return np.stack([self.summarize(x) for x in data])

    def prior_bounds(self) -> np.ndarray | None:
        """Per-parameter ``(lo, hi)`` box of the prior, if it has one."""
        return None

    def check_params(self, params) -> np.ndarray:
        theta = np.asarray(params, dtype=float)
        if theta.shape != (self.param_dim,):
            raise ModelError(
                f"{self.model_id}: expected {self.param_dim} parameters, got shape {theta.shape}"
            )
        if not self.in_support(theta):
            raise ModelError(f"{self.model_id}: parameters {theta.tolist()} outside prior support")
        return theta

    def __eq__(self, other):
        return type(self) is type(other) and self.config() == other.config()

    def __hash__(self):
        return hash((self.model_id, json.dumps(self.config(), sort_keys=True)))

    def __repr__(self):
        cfg = ", ".join(f"{k}={v!r}" for k, v in self.config().items())
        return f"{type(self).__name__}({cfg})"


_REGISTRY: dict[str, Callable[..., Model]] = {}


def register_model(model_id: str):
    def deco(factory):
        _REGISTRY[model_id] = factory
        return factory

    return deco


def registered_models() -> list[str]:
    _load_builtin_models()
    return sorted(_REGISTRY)


def make_model(model_id: str, **config) -> Model:
    """Instantiate a registered model from its id and hyperparameters."""
    _load_builtin_models()
    try:
        factory = _REGISTRY[model_id]
    except KeyError:
        raise ModelError(
            f"unknown model_id {model_id!r}; registered: {', '.join(sorted(_REGISTRY))}"
        ) from None
    return factory(**config)


def _load_builtin_models():
    from .models import admix, balsel  # noqa: F401  (registration side effect)


@dataclass(frozen=True, eq=False)
class ReferenceSet:
    """The pool of ``m`` stored realizations ``(theta_i, x_i)``.

    ``params`` has shape ``(m, p)`` and ``data`` shape ``(m, n, d_obs)``.
    Treat as immutable; arrays are made read-only on construction.
    """

    params: np.ndarray
    data: np.ndarray
    model_id: str
    model_config: dict
    seed: dict = field(default_factory=dict)

    def __post_init__(self):
        params = np.ascontiguousarray(self.params, dtype=float)
        data = np.ascontiguousarray(self.data, dtype=float)
        if params.ndim != 2 or data.ndim != 3 or params.shape[0] != data.shape[0]:
            raise ValueError(
                f"inconsistent pool arrays: params {params.shape}, data {data.shape}"
            )
        if params.shape[0] < 1:
            raise ValueError("a reference set needs m >= 1 realizations")
        params.setflags(write=False)
        data.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "data", data)

    @property
    def m(self) -> int:
        return self.params.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def p(self) -> int:
        return self.params.shape[1]

    @property
    def d_obs(self) -> int:
        return self.data.shape[2]

    def __len__(self):
        return self.m

    def subset(self, indices) -> "ReferenceSet":
        idx = np.asarray(indices, dtype=np.intp)
        return ReferenceSet(
            self.params[idx], self.data[idx], self.model_id, dict(self.model_config), dict(self.seed)
        )

    def check_model(self, model: Model):
        if model.model_id != self.model_id or model.config() != self.model_config:
            raise PoolFormatError(
                f"pool was built for {self.model_id} {self.model_config}, "
                f"not {model.model_id} {model.config()}"
            )

    def __eq__(self, other):
        if not isinstance(other, ReferenceSet):
            return NotImplemented
        return (
            self.model_id == other.model_id
            and self.model_config == other.model_config
            and self.seed == other.seed
            and np.array_equal(self.params, other.params)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def _simulate_block(_shared, args):
    model, n, seed, start, stop = args
    rng = seed.child("block", start).generator()
    theta = model.sample_prior(rng, size=stop - start)
    data = model.simulate_many(theta, n, rng)
    return theta, data


def simulate_blocks(model: Model, count: int, n: int, seed: SeedSpec, workers: int = 1):
    """Draw ``count`` prior parameters and simulate one data set for each.

    Returns ``(params, data)``; identical for any ``workers``.
    """
    tasks = [
        (model, n, seed, start, min(start + BLOCK_SIZE, count))
        for start in range(0, count, BLOCK_SIZE)
    ]
    results = parallel_map(_simulate_block, tasks, workers)
    params = np.concatenate([r[0] for r in results])
    data = np.concatenate([r[1] for r in results])
    return params, data


def _summarize_block(_shared, args):
    model = args[0]
    theta, data = _simulate_block(None, args)
    return theta, model.summarize_many(data)


def simulate_summaries(model: Model, count: int, n: int, seed: SeedSpec, workers: int = 1):
    """Like :func:`simulate_blocks` but keeps only the summaries, shape ``(count, k)``.

    Uses the same block streams, so the summaries equal those of the data
    :func:`simulate_blocks` would return for the same arguments.
    """
    tasks = [
        (model, n, seed, start, min(start + BLOCK_SIZE, count))
        for start in range(0, count, BLOCK_SIZE)
    ]
    results = parallel_map(_summarize_block, tasks, workers)
    return np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results])


def build_reference_set(
    model: Model, m: int, n: int, seed: SeedSpec | int, workers: int = 1
) -> ReferenceSet:
    """Simulate ``m`` realizations: prior draw, then one mechanistic data set of size ``n``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not isinstance(seed, SeedSpec):
        seed = SeedSpec(int(seed))
    params, data = simulate_blocks(model, m, n, seed.child("reference"), workers)
    return ReferenceSet(params, data, model.model_id, model.config(), seed.to_dict())


def save_reference_set(pool: ReferenceSet, path) -> None:
    """Write a pool: one JSON header line, then ``m`` little-endian float64 records.

    Each record is ``p`` parameter values followed by the ``n * d_obs``
    observation values of that realization.
    """
    header = {
        "magic": POOL_MAGIC,
        "format_version": POOL_FORMAT_VERSION,
        "model_id": pool.model_id,
        "model_config": pool.model_config,
        "p": pool.p,
        "d_obs": pool.d_obs,
        "n": pool.n,
        "m": pool.m,
        "seed": pool.seed,
    }
    records = np.concatenate([pool.params, pool.data.reshape(pool.m, -1)], axis=1)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(records.astype("<f8").tobytes())


def load_reference_set(path, model: Model | None = None) -> ReferenceSet:
    """Read a pool written by :func:`save_reference_set`.

    Raises :class:`PoolFormatError` on a bad header, an unknown model id,
    a row count that disagrees with the header, or a mismatch with ``model``.
    """
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise PoolFormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl])
    except json.JSONDecodeError as exc:
        raise PoolFormatError(f"{path}: unreadable header ({exc})") from None
    if header.get("magic") != POOL_MAGIC:
        raise PoolFormatError(f"{path}: not an AABC pool file")
    if header.get("format_version") != POOL_FORMAT_VERSION:
        raise PoolFormatError(f"{path}: unsupported format version {header.get('format_version')}")
    model_id = header["model_id"]
    if model_id not in registered_models():
        raise PoolFormatError(f"{path}: unknown model_id {model_id!r}")
    p, d_obs, n, m = (int(header[k]) for k in ("p", "d_obs", "n", "m"))
    width = p + n * d_obs
    payload = raw[nl + 1 :]
    if len(payload) % (8 * width) != 0 or len(payload) // (8 * width) != m:
        rows = len(payload) / (8 * width)
        raise PoolFormatError(f"{path}: header declares m={m} realizations but payload holds {rows:g}")
    records = np.frombuffer(payload, dtype="<f8").reshape(m, width).astype(float)
    pool = ReferenceSet(
        records[:, :p],
        records[:, p:].reshape(m, n, d_obs),
        model_id,
        header["model_config"],
        header.get("seed", {}),
    )
    expected = make_model(model_id, **pool.model_config)
    if expected.param_dim != p or expected.obs_dim != d_obs:
        raise PoolFormatError(f"{path}: dimensions p={p}, d_obs={d_obs} do not fit {model_id}")
    if model is not None:
        pool.check_model(model)
    return pool


def export_reference_csv(pool: ReferenceSet, path=None) -> str | None:
    """CSV view of a pool: ``theta_1..theta_p`` then flattened observations ``x_1..``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    flat = pool.data.reshape(pool.m, -1)
    w.writerow([f"theta_{j + 1}" for j in range(pool.p)] + [f"x_{j + 1}" for j in range(flat.shape[1])])
    for theta, x in zip(pool.params, flat):
        w.writerow([repr(float(v)) for v in theta] + [repr(float(v)) for v in x])
    text = buf.getvalue()
    if path is None:
        return text
    Path(path).write_text(text)
    return None
