import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from altbm.errors import InvalidInput, OutOfHorizon
from altbm.paths import (
    BrownianSkeleton,
    FluidPath,
    PhasePath,
    eval_fluid,
    integrate_phase,
    interval_minima,
    min_on_interval,
    phase_from_fluid,
)


def v_path():
    return integrate_phase(PhasePath([0.0, 0.1, 0.3], [-1, 1]), 2.0)


def test_eval_at_zero():
    assert eval_fluid(v_path(), 0.0) == 0.0


def test_eval_single_interval():
    p = FluidPath([0.0, 1.0], [0.0, 2.0], [2.0])
    assert eval_fluid(p, 0.25) == pytest.approx(0.5, abs=1e-15)


def test_eval_two_intervals():
    p = v_path()
    assert eval_fluid(p, 0.3) == pytest.approx(0.2, abs=1e-15)
    assert eval_fluid(p, 0.1) == pytest.approx(-0.2, abs=1e-15)
    np.testing.assert_allclose(eval_fluid(p, np.array([0.05, 0.2])), [-0.1, 0.0], atol=1e-15)


def test_eval_exact_at_breakpoints():
    p = v_path()
    for t, level in zip(p.times, p.levels):
        assert eval_fluid(p, t) == level


def test_eval_out_of_horizon():
    with pytest.raises(OutOfHorizon):
        eval_fluid(v_path(), 0.31)
    with pytest.raises(OutOfHorizon):
        eval_fluid(v_path(), -1e-9)


def test_integrate_constant_phase():
    p = integrate_phase(PhasePath([0.0, 2.5], [1]), 3.0)
    assert p.levels[-1] == pytest.approx(7.5)


def test_integrate_alternating_equal_intervals():
    times = np.arange(11) * 0.25
    states = np.tile([1, -1], 5)
    p = integrate_phase(PhasePath(times, states), 4.0)
    np.testing.assert_allclose(p.levels[0::2], 0.0, atol=1e-14)


def test_integrate_vector_phase_needs_coordinate():
    j = PhasePath([0.0, 1.0, 2.0], [[1, -1], [-1, -1]])
    with pytest.raises(InvalidInput):
        integrate_phase(j, 1.0)
    p2 = integrate_phase(j, 1.0, coord=1)
    np.testing.assert_allclose(p2.levels, [0.0, -1.0, -2.0])
    np.testing.assert_array_equal(j.project(0).states, [1, -1])


def test_min_on_interval_examples():
    p = v_path()
    assert min_on_interval(p, 0.0, 0.3) == pytest.approx(-0.2, abs=1e-15)
    assert min_on_interval(p, 0.15, 0.25) == pytest.approx(eval_fluid(p, 0.15))
    with pytest.raises(OutOfHorizon):
        min_on_interval(p, 0.2, 0.1)


def test_phase_path_validation_and_lookup():
    j = PhasePath([0.0, 0.5, 1.0], [-1, 1])
    assert j.state_at(0.0) == -1 and j.state_at(0.5) == 1 and j.state_at(1.0) == 1
    np.testing.assert_allclose(j.holding_times(), [0.5, 0.5])
    with pytest.raises(InvalidInput):
        PhasePath([0.0, 0.5, 0.5], [-1, 1])
    with pytest.raises(InvalidInput):
        PhasePath([0.1, 0.5], [1])
    with pytest.raises(OutOfHorizon):
        j.state_at(2.0)


def test_fluid_path_continuity_enforced():
    with pytest.raises(InvalidInput):
        FluidPath([0.0, 1.0], [0.0, 1.5], [1.0])
    with pytest.raises(InvalidInput):
        FluidPath([0.0, 1.0], [0.1, 1.1], [1.0])


def test_paths_are_immutable():
    p = v_path()
    with pytest.raises(ValueError):
        p.levels[0] = 1.0


def test_skeleton_validation():
    BrownianSkeleton([0.0, 1.0], [0.0, 0.3], [-0.1])
    with pytest.raises(InvalidInput):
        BrownianSkeleton([0.0, 1.0], [0.0, 0.3], [0.1])
    with pytest.raises(InvalidInput):
        BrownianSkeleton([0.0, 1.0], [0.2, 0.3], [-0.1])


def test_interval_minima_requires_breakpoints():
    with pytest.raises(InvalidInput):
        interval_minima(v_path(), [0.0, 0.2])


phases = st.lists(st.tuples(st.floats(1e-3, 2.0), st.sampled_from([1, -1])), min_size=1, max_size=40)


@settings(max_examples=80, deadline=None)
@given(pieces=phases, scale=st.floats(0.1, 50.0))
def test_integrate_phase_roundtrip(pieces, scale):
    times = np.concatenate(([0.0], np.cumsum([d for d, _ in pieces])))
    j = PhasePath(times, [s for _, s in pieces])
    p = integrate_phase(j, scale)
    again = integrate_phase(phase_from_fluid(p, scale), scale)
    np.testing.assert_array_equal(phase_from_fluid(p, scale).states, j.states)
    assert np.max(np.abs(again.levels - p.levels)) <= 1e-12 * (1 + np.max(np.abs(p.levels)))


@settings(max_examples=80, deadline=None)
@given(pieces=phases, scale=st.floats(0.1, 50.0), data=st.data())
def test_minimum_is_attained_at_breakpoints(pieces, scale, data):
    times = np.concatenate(([0.0], np.cumsum([d for d, _ in pieces])))
    p = integrate_phase(PhasePath(times, [s for _, s in pieces]), scale)
    assert min_on_interval(p, 0.0, p.horizon) == p.levels.min()
    # interval minima over a subset of breakpoints against a dense brute force
    knots = sorted(set(data.draw(st.lists(st.integers(0, len(times) - 1), min_size=2, max_size=6))))
    if len(knots) < 2:
        return
    mins = interval_minima(p, times[knots])
    for k, (a, b) in enumerate(zip(knots[:-1], knots[1:])):
        assert mins[k] == p.levels[a:b + 1].min()
        grid = np.linspace(times[a], times[b], 201)
        assert mins[k] <= eval_fluid(p, grid).min() + 1e-12
