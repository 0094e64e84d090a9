import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aabc.model import ModelError
from aabc.models.admix import (
    AdmixConfig,
    AdmixtureModel,
    found_population,
    propagate,
    simulate_admix,
    step_generation,
    summarize_admix,
)
from aabc.rand import SeedSpec


def test_founding_values_and_frequencies():
    pop = found_population(100_000, SeedSpec(1).generator())
    assert set(np.unique(pop)) <= {0.0, 0.5, 1.0}
    freq = np.array([(pop == v).mean() for v in (0.0, 0.5, 1.0)])
    assert np.allclose(freq, [0.25, 0.5, 0.25], atol=0.01)


def test_forced_parents():
    rng = SeedSpec(2).generator()
    prev = found_population(1000, rng)
    assert np.all(step_generation(prev, [1.0, 0.0, 0.0], rng) == 1.0)
    assert np.all(step_generation(np.full(50, 0.3), [0.0, 0.0, 1.0], rng) == 0.3)


def test_source_only_mean():
    pop = step_generation(np.zeros(100_000), [0.5, 0.5, 0.0], SeedSpec(3).generator())
    assert pop.mean() == pytest.approx(0.5, abs=0.01)


def test_t1_samples_founders():
    x = simulate_admix([0.2, 0.3, 0.5], AdmixConfig(N=200, t=1, n=50), SeedSpec(4).generator())
    assert x.shape == (50, 1)
    assert set(np.unique(x)) <= {0.0, 0.5, 1.0}


def test_sampling_without_replacement():
    cfg = AdmixConfig(N=64, t=1, n=64)
    rng = SeedSpec(5).generator()
    pop = propagate([0.0, 0.0, 1.0], 64, 1, SeedSpec(5).generator())
    x = simulate_admix([0.0, 0.0, 1.0], cfg, rng)
    assert sorted(x[:, 0]) == sorted(pop)


def test_martingale_under_pure_inheritance():
    rates = np.tile([0.0, 0.0, 1.0], (100, 1))
    pop = propagate(rates, 10_000, 20, SeedSpec(6).generator())
    means = pop.mean(axis=1)
    half = 2.576 * means.std(ddof=1) / np.sqrt(means.size)
    assert abs(means.mean() - 0.5) < max(half, 0.01)


def test_fixed_point():
    rates = np.tile([0.3, 0.1, 0.6], (100, 1))
    pop = propagate(rates, 10_000, 50, SeedSpec(7).generator())
    assert pop.mean() == pytest.approx(0.75, abs=0.02)


@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=3, max_size=3),
    st.integers(min_value=0, max_value=2**32),
)
@settings(max_examples=40, deadline=None)
def test_fractions_stay_in_unit_interval(raw, seed):
    p = np.asarray(raw) + 1e-9
    p /= p.sum()
    p[2] = 1.0 - p[0] - p[1]
    pop = propagate(np.clip(p, 0, 1), 100, 6, SeedSpec(seed).generator())
    assert np.all((pop >= 0) & (pop <= 1))


def test_batch_matches_shapes():
    cfg = AdmixConfig(N=100, t=3, n=10)
    rates = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    x = simulate_admix(rates, cfg, SeedSpec(8).generator())
    assert x.shape == (2, 10, 1)
    assert np.all(x[1] == 1.0)


@pytest.mark.parametrize(
    "params", [[0.5, 0.5, 0.1], [-0.1, 0.6, 0.5], [np.nan, 0.5, 0.5], [0.5, 0.5]]
)
def test_rates_validated(params):
    with pytest.raises(ModelError):
        step_generation(np.zeros(4), params, SeedSpec(0).generator())


def test_config_validated():
    with pytest.raises(ModelError):
        AdmixConfig(N=10, t=1, n=11)
    with pytest.raises(ModelError):
        AdmixConfig(N=1, t=1, n=1)
    with pytest.raises(ModelError):
        AdmixConfig(N=10, t=0, n=1)
    with pytest.raises(ModelError):
        simulate_admix([0, 0, 1], AdmixConfig(10, 1, 5), SeedSpec(0).generator(), n=11)


def test_summary_examples():
    assert np.allclose(summarize_admix(np.full((8, 1), 0.5)), [0.5, 0.0, 0.0, 0.0])
    two = summarize_admix(np.array([[0.0], [1.0]]))
    assert two[0] == 0.5 and two[1] == 0.5
    assert np.allclose(summarize_admix(np.array([[0.0], [0.0], [1.0], [1.0]])), [0.5, 1 / 3, 0.0, -2.0])


def test_summary_errors():
    with pytest.raises(ModelError):
        summarize_admix(np.array([[0.5]]))
    with pytest.raises(ModelError):
        summarize_admix(np.array([[0.5], [np.inf]]))


def test_presets():
    full = AdmixtureModel.preset("full")
    assert full.config() == {"N": 10_000, "t": 771, "n": 604}
    assert AdmixtureModel.preset("decomposition").config()["t"] == 30
    with pytest.raises(ModelError):
        AdmixtureModel.preset("nope")


def test_model_vectorized_matches_loop_in_law():
    m = AdmixtureModel(N=300, t=4, n=50)
    rng = SeedSpec(9).generator()
    theta = np.tile([0.3, 0.2, 0.5], (200, 1))
    batch = m.summarize_many(m.simulate_many(theta, 50, rng))
    loop = np.stack([m.summarize(m.simulate(t, 50, rng)) for t in theta])
    assert batch[:, 0].mean() == pytest.approx(loop[:, 0].mean(), abs=0.02)
