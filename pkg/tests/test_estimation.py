import math
import warnings

import numpy as np
import pytest

from altbm.errors import InvalidInput, NoObservations
from altbm.estimation import (
    UnderpoweredWarning,
    batch_means,
    convergence_sweep,
    empirical_generator,
    exact_alt_bm_sample,
    mc_correlation,
    occupation_times,
    sync_point_mass,
)
from altbm.exp_alt import ExpAltParams, corr_exp
from altbm.flipflop import wh_couple
from altbm.map_alt import MapParams, build_map_alt_generator, cov_oracle, simulate_map_alternating
from altbm.paths import PhasePath
from altbm.sampling import RandomStream

NON_EXP = MapParams([0.7, 0.3], [[-3.0, 1.0], [0.0, -2.0]], [[1.0, 1.0], [2.0, 0.0]])


def test_empirical_single_jump():
    eg = empirical_generator([PhasePath([0.0, 2.0, 3.0], [1, -1])], (1, -1))
    assert eg.estimate[0, 1] == 0.5 and eg.estimate[0, 0] == -0.5
    np.testing.assert_array_equal(eg.counts, [[0, 1], [0, 0]])
    np.testing.assert_allclose(eg.holding, [2.0, 1.0])


def test_empirical_unobserved_row():
    eg = empirical_generator([PhasePath([0.0, 2.0], [1])], (1, -1))
    np.testing.assert_array_equal(eg.estimate[0], [0.0, 0.0])
    assert np.all(np.isnan(eg.estimate[1]))
    np.testing.assert_array_equal(eg.observed, [True, False])


def test_empirical_errors():
    with pytest.raises(NoObservations):
        empirical_generator([], (1, -1))
    with pytest.raises(InvalidInput):
        empirical_generator([PhasePath([0.0, 1.0], [3])], (1, -1))


def test_empirical_two_state_chain():
    phase = wh_couple(4.0, None, RandomStream(1), horizon=1e4).phase
    eg = empirical_generator([phase], (1, -1))
    assert phase.horizon > 1e4 * 0.95
    target = np.array([[-4.0, 4.0], [4.0, -4.0]])
    assert np.all(np.abs(eg.estimate - target) <= 3 * eg.stderr)


def test_empirical_non_exponential_map_generator():
    lam = 16.0
    _, _, paths = simulate_map_alternating(NON_EXP, [lam], RandomStream(0), horizon=1e4)
    q = build_map_alt_generator(lam, NON_EXP)
    eg = empirical_generator([paths[lam].phase], q.states)
    assert np.all(eg.observed)
    assert np.all(eg.counts[q.Q == 0] == 0)
    live = q.Q != 0
    assert np.all(np.abs(eg.estimate - q.Q)[live] <= 3 * eg.stderr[live])


def test_batch_means():
    x = np.repeat(np.arange(30.0), 10)
    est = batch_means(x)
    assert est.mean == pytest.approx(14.5)
    assert est.stderr == pytest.approx(np.arange(30.0).std(ddof=1) / math.sqrt(30))
    with pytest.raises(InvalidInput):
        batch_means(np.ones(10))


def test_occupation_times_sum_to_t():
    plus, minus, k = occupation_times(NON_EXP, 2.5, 1000, RandomStream(2))
    np.testing.assert_allclose(plus + minus, 2.5, rtol=1e-12)
    # even arrival count means the run ends synchronised
    assert np.all(k >= 0)


def test_never_desynchronised_gives_identical_coordinates():
    b, bstar = exact_alt_bm_sample(ExpAltParams(1e-12, 1.0), 1.0, RandomStream(3), 1000)
    np.testing.assert_array_equal(b, bstar)
    single = exact_alt_bm_sample(ExpAltParams(1e-12, 1.0), 1.0, RandomStream(3))
    assert single[0] == single[1]


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_marginals_are_standard(t):
    b, bstar = exact_alt_bm_sample(ExpAltParams(1.0, 2.0), t, RandomStream(4), 10**5)
    for x in (b, bstar):
        sq = x * x
        assert abs(sq.mean() - t) <= 3 * sq.std() / math.sqrt(len(sq))


def test_fast_desynchronisation():
    p = ExpAltParams(1e6, 1.0)
    est = mc_correlation(p, 1.0, 10**5, RandomStream(5))
    assert est.within(corr_exp(p, 1.0))


def test_mc_correlation_needs_replications():
    with pytest.raises(InvalidInput):
        mc_correlation(ExpAltParams(1.0, 1.0), 1.0, 999, RandomStream(0))
    with pytest.raises(InvalidInput):
        mc_correlation(ExpAltParams(1.0, 1.0), 0.0, 1000, RandomStream(0))


def test_mc_correlation_reproducible():
    a = mc_correlation(NON_EXP, 1.0, 2000, RandomStream(6))
    b = mc_correlation(NON_EXP, 1.0, 2000, RandomStream(6))
    assert a == b


@pytest.mark.parametrize("m", [
    NON_EXP,
    MapParams([1.0], [[-2.0]], [[2.0]]),
    MapParams([0.2, 0.5, 0.3], [[-4.0, 1.0, 0.5], [0.3, -1.0, 0.2], [0.0, 2.0, -3.0]],
              [[1.0, 0.5, 1.0], [0.0, 0.5, 0.0], [0.5, 0.0, 0.5]]),
    ExpAltParams(3.0, 0.5).as_map(),
])
def test_time_domain_oracle_against_monte_carlo(m):
    # the oracle is adopted only after agreeing with exact simulation
    for i, t in enumerate((0.5, 1.5)):
        b, bstar = exact_alt_bm_sample(m, t, RandomStream(7).substream(f"{i}"), 10**5)
        est = batch_means(b * bstar)
        assert est.within(cov_oracle(m, t))


def test_point_mass_edge_cases():
    assert sync_point_mass(1.0, 0.0, 1000, RandomStream(0)).mean == 1.0
    with pytest.raises(InvalidInput):
        sync_point_mass(0.0, 1.0, 1000, RandomStream(0))
    with pytest.raises(InvalidInput):
        sync_point_mass(1.0, 1.0, 10, RandomStream(0))


def test_point_mass_power_flag():
    with pytest.warns(UnderpoweredWarning, match="replications"):
        sync_point_mass(10.0, 1.0, 10**5, RandomStream(8))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sync_point_mass(1.0, 1.0, 10**4, RandomStream(8))


def test_point_mass_value():
    est = sync_point_mass(2.0, 0.5, 10**5, RandomStream(9))
    assert est.within(math.exp(-1.0))


@pytest.mark.parametrize("construction,params", [
    ("standard", None),
    ("exp-alt", ExpAltParams(1.0, 2.0)),
    ("map-alt", NON_EXP),
])
def test_convergence_sweep_small(construction, params):
    out = convergence_sweep(construction, [16.0, 64.0, 256.0, 1024.0], 1.0, 20, RandomStream(10), params)
    rows = out["rows"]
    assert [r["lambda"] for r in rows] == [16.0, 64.0, 256.0, 1024.0]
    assert all(r["max_identity_residual"] <= 1e-9 for r in rows)
    assert all(r["p90_misalignment"] >= r["median_misalignment"] for r in rows)
    lo, hi = out["slope_ci"]
    assert math.isfinite(out["slope"]) and lo <= out["slope"] <= hi
    assert out["misalignment"].shape == (4, 20)


def test_convergence_sweep_validation():
    with pytest.raises(InvalidInput):
        convergence_sweep("standard", [64.0, 16.0], 1.0, 5, RandomStream(0))
    with pytest.raises(InvalidInput):
        convergence_sweep("other", [16.0, 64.0], 1.0, 5, RandomStream(0))
