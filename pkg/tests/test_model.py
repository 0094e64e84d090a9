import json

import numpy as np
import pytest
from scipy import stats

from aabc.model import (
    ModelError,
    PoolFormatError,
    ReferenceSet,
    build_reference_set,
    export_reference_csv,
    load_reference_set,
    make_model,
    registered_models,
    save_reference_set,
    simulate_blocks,
    simulate_summaries,
)
from aabc.models.admix import AdmixtureModel
from aabc.models.balsel import BalancingSelectionModel
from aabc.rand import SeedSpec


@pytest.fixture
def small_balsel():
    return BalancingSelectionModel(K=4, loci=3)


def test_registry():
    assert registered_models() == ["admix", "balsel"]
    assert make_model("balsel", K=3, loci=2).obs_dim == 6
    assert make_model("admix", N=100, t=3, n=10) == AdmixtureModel(100, 3, 10)
    with pytest.raises(ModelError, match="'nope'"):
        make_model("nope")


def test_prior_support():
    rng = SeedSpec(1).generator()
    th = BalancingSelectionModel().sample_prior(rng, size=1000)
    assert np.all((th[:, 0] >= 0) & (th[:, 0] <= 50))
    assert np.all((th[:, 1] >= 0.1) & (th[:, 1] <= 10))
    ad = AdmixtureModel.preset("toy").sample_prior(rng, size=1000)
    assert np.all(ad >= 0) and np.allclose(ad.sum(axis=1), 1.0)


def test_degenerate_uniform_prior_is_constant():
    m = BalancingSelectionModel(sigma_bounds=(5.0, 5.0))
    th = m.sample_prior(SeedSpec(2).generator(), size=50)
    assert np.all(th[:, 0] == 5.0)


def test_simulate_checks_support(small_balsel):
    rng = SeedSpec(0).generator()
    with pytest.raises(ModelError):
        small_balsel.simulate([60.0, 1.0], 2, rng)
    with pytest.raises(ModelError):
        small_balsel.simulate([1.0, 1.0, 1.0], 2, rng)
    assert small_balsel.simulate([1.0, 1.0], 1, rng).shape == (1, 12)


def test_simulate_and_summarize_deterministic(small_balsel):
    a = small_balsel.simulate([10.0, 2.0], 4, SeedSpec(9).generator())
    b = small_balsel.simulate([10.0, 2.0], 4, SeedSpec(9).generator())
    assert np.array_equal(a, b)
    assert np.array_equal(small_balsel.summarize(a), small_balsel.summarize(a))


def test_singleton_pool(small_balsel):
    pool = build_reference_set(small_balsel, 1, 3, SeedSpec(0))
    assert (pool.m, pool.n, pool.p, pool.d_obs) == (1, 3, 2, 12)


def test_pool_arrays_read_only(small_balsel):
    pool = build_reference_set(small_balsel, 4, 2, SeedSpec(0))
    with pytest.raises(ValueError):
        pool.params[0, 0] = 1.0


def test_pool_parameters_follow_dirichlet_prior():
    # Bin p_A and p_B jointly on the simplex; under Dirichlet(1,1,1) every
    # cell of the 4x4 grid below the diagonal has area proportional to its
    # clipped size, computed here by direct Dirichlet sampling.
    model = AdmixtureModel.preset("toy")
    pool = build_reference_set(model, 1000, 20, SeedSpec(11))
    ref = np.random.default_rng(0).dirichlet(np.ones(3), size=400_000)

    def cells(x):
        i = np.minimum((x[:, 0] * 4).astype(int), 3)
        j = np.minimum((x[:, 1] * 4).astype(int), 3)
        return i * 4 + j

    expected = np.bincount(cells(ref), minlength=16) / ref.shape[0]
    keep = expected > 0
    observed = np.bincount(cells(pool.params), minlength=16)
    assert stats.chisquare(observed[keep], expected[keep] * pool.m).pvalue > 0.001


def test_blocks_independent_of_workers(small_balsel):
    s = SeedSpec(5)
    p1, d1 = simulate_blocks(small_balsel, 600, 2, s, workers=1)
    p3, d3 = simulate_blocks(small_balsel, 600, 2, s, workers=3)
    assert np.array_equal(p1, p3) and np.array_equal(d1, d3)
    t, summ = simulate_summaries(small_balsel, 600, 2, s)
    assert np.array_equal(t, p1)
    assert np.allclose(summ, small_balsel.summarize_many(d1))


def test_round_trip(tmp_path, small_balsel):
    pool = build_reference_set(small_balsel, 50, 4, SeedSpec(3))
    path = tmp_path / "pool.aabc"
    save_reference_set(pool, path)
    back = load_reference_set(path, small_balsel)
    assert back == pool
    assert back.seed == {"root_seed": 3, "stream_id": 0}


def test_round_trip_large_admix(tmp_path):
    model = AdmixtureModel(N=50, t=2, n=5)
    pool = build_reference_set(model, 10_000, 5, SeedSpec(4))
    save_reference_set(pool, tmp_path / "p")
    back = load_reference_set(tmp_path / "p")
    assert np.array_equal(back.params, pool.params) and np.array_equal(back.data, pool.data)


def _rewrite_header(path, **changes):
    raw = path.read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    header.update(changes)
    path.write_bytes(json.dumps(header).encode() + raw[nl:])


def test_load_rejects_row_count_mismatch(tmp_path, small_balsel):
    path = tmp_path / "p"
    save_reference_set(build_reference_set(small_balsel, 5, 2, SeedSpec(1)), path)
    _rewrite_header(path, m=6)
    with pytest.raises(PoolFormatError, match="m=6"):
        load_reference_set(path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(PoolFormatError):
        load_reference_set(path)


def test_load_rejects_unknown_model(tmp_path, small_balsel):
    path = tmp_path / "p"
    save_reference_set(build_reference_set(small_balsel, 2, 2, SeedSpec(1)), path)
    _rewrite_header(path, model_id="mystery")
    with pytest.raises(PoolFormatError, match="mystery"):
        load_reference_set(path)


def test_load_rejects_other_config(tmp_path, small_balsel):
    path = tmp_path / "p"
    save_reference_set(build_reference_set(small_balsel, 2, 2, SeedSpec(1)), path)
    with pytest.raises(PoolFormatError):
        load_reference_set(path, BalancingSelectionModel(K=4, loci=4))


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "p"
    path.write_bytes(b"not a pool")
    with pytest.raises(PoolFormatError):
        load_reference_set(path)
    path.write_bytes(b'{"magic": "other"}\n')
    with pytest.raises(PoolFormatError):
        load_reference_set(path)


def test_csv_export(small_balsel):
    pool = build_reference_set(small_balsel, 3, 2, SeedSpec(1))
    lines = export_reference_csv(pool).splitlines()
    assert lines[0].startswith("theta_1,theta_2,x_1,")
    assert lines[0].endswith(",x_24")
    assert len(lines) == 4
    assert float(lines[1].split(",")[0]) == pool.params[0, 0]


def test_reference_set_validation():
    with pytest.raises(ValueError):
        ReferenceSet(np.zeros((2, 2)), np.zeros((3, 1, 1)), "balsel", {})
    with pytest.raises(ValueError):
        ReferenceSet(np.zeros((0, 2)), np.zeros((0, 1, 1)), "balsel", {})
