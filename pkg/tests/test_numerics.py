import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from altbm.errors import InvalidInput, InversionDiverged, SingularMatrix
from altbm.numerics import invert_laplace, is_generator, mat_exp, solve_linear


def random_generator(rng, n, scale=3.0):
    q = rng.uniform(0, scale, (n, n))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


# ---- solve_linear

def test_solve_identity():
    np.testing.assert_array_equal(solve_linear(np.eye(2), [3.0, 4.0]), [3.0, 4.0])


def test_solve_upper_triangular():
    x = solve_linear([[2.0, -1.0], [0.0, 3.0]], [1.0, 1.0])
    np.testing.assert_allclose(x, [2 / 3, 1 / 3], rtol=0, atol=1e-15)


def test_solve_rank_deficient():
    with pytest.raises(SingularMatrix):
        solve_linear([[1.0, 1.0], [1.0, 1.0]], [1.0, 0.0])


def test_solve_rejects_non_square():
    with pytest.raises(InvalidInput):
        solve_linear(np.ones((2, 3)), [1.0, 1.0])


def test_solve_residual_on_random_systems():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        a = rng.normal(size=(4, 4)) + 4 * np.eye(4)
        y = rng.normal(size=4)
        x = solve_linear(a, y)
        worst = max(worst, np.max(np.abs(a @ x - y)) / (1 + np.max(np.abs(y))))
    assert worst <= 1e-10


def test_solve_matrix_right_hand_side():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    y = rng.normal(size=(3, 2))
    np.testing.assert_allclose(a @ solve_linear(a, y), y, atol=1e-12)


# ---- mat_exp

def test_mat_exp_at_zero_is_identity():
    q = np.array([[-1.0, 1.0], [2.0, -2.0]])
    np.testing.assert_array_equal(mat_exp(q, 0.0), np.eye(2))


def test_mat_exp_two_state_example():
    p = mat_exp(np.array([[-1.0, 1.0], [2.0, -2.0]]), 1.0)
    expected = [[0.683262, 0.316738], [0.633475, 0.366525]]
    np.testing.assert_allclose(p, expected, atol=1e-6)
    # eigenvalues {0, -3}: closed form
    e = math.exp(-3.0)
    np.testing.assert_allclose(p, [[(2 + e) / 3, (1 - e) / 3], [2 * (1 - e) / 3, (1 + 2 * e) / 3]],
                               atol=1e-13)


def test_mat_exp_diagonal():
    p = mat_exp(np.diag([-0.5, -2.0]), 1.7)
    np.testing.assert_allclose(p, np.diag([math.exp(-0.85), math.exp(-3.4)]), rtol=1e-13)


def test_mat_exp_rejects_negative_time():
    with pytest.raises(InvalidInput):
        mat_exp(np.zeros((2, 2)), -1.0)


def test_mat_exp_general_matrix_matches_scipy():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = rng.normal(size=(4, 4))
        np.testing.assert_allclose(mat_exp(a, 0.7), scipy.linalg.expm(0.7 * a), rtol=1e-10, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 5), seed=st.integers(0, 2**32 - 1),
       s=st.floats(0.0, 5.0), t=st.floats(0.0, 5.0))
def test_mat_exp_generator_properties(n, seed, s, t):
    q = random_generator(np.random.default_rng(seed), n)
    assert is_generator(q)
    ps, pt, pst = mat_exp(q, s), mat_exp(q, t), mat_exp(q, s + t)
    for p in (ps, pt, pst):
        assert np.all(p >= 0)
        assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-10
    assert np.max(np.abs(pst - ps @ pt)) <= 1e-8
    np.testing.assert_allclose(pst, scipy.linalg.expm(q * (s + t)), atol=1e-10)


def test_mat_exp_stiff_generator():
    q = np.array([[-500.0, 500.0, 0.0], [0.01, -0.02, 0.01], [0.0, 300.0, -300.0]])
    p = mat_exp(q, 40.0)
    np.testing.assert_allclose(p, scipy.linalg.expm(40 * q), atol=1e-10)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


# ---- invert_laplace

@pytest.mark.parametrize("t", [0.1, 0.5, 1, 2, 5, 10])
def test_invert_ramp(t):
    assert abs(invert_laplace(lambda q: 1 / q**2, t) - t) <= 1e-6


@pytest.mark.parametrize("t", [0.1, 0.5, 1, 2, 5, 10])
def test_invert_exponential(t):
    assert abs(invert_laplace(lambda q: 1 / (q + 3), t) - math.exp(-3 * t)) <= 1e-6


def test_invert_spot_values():
    assert abs(invert_laplace(lambda q: 1 / q**2, 2.0) - 2.0) <= 1e-6
    assert abs(invert_laplace(lambda q: 1 / (q + 3), 1.0) - 0.0497871) <= 1e-6
    a, b, g = 1.0, 2.0, 3.0
    f = lambda q: ((b - a) / (g * q) + 2 * a / (g * (g + q))) / q  # noqa: E731
    assert abs(invert_laplace(f, 1.0) - 0.544492) <= 1e-6


def test_invert_flags_nonsmooth_transform():
    # a unit step at t=1 sits exactly on the evaluation point
    with pytest.raises(InversionDiverged):
        invert_laplace(lambda q: np.exp(-q) / q, 1.0, tolerance=1e-10)


def test_invert_rejects_bad_arguments():
    with pytest.raises(InvalidInput):
        invert_laplace(lambda q: 1 / q, 0.0)
    with pytest.raises(InvalidInput):
        invert_laplace(lambda q: 1 / q, 1.0, terms=4)


def test_invert_non_finite_transform():
    with pytest.raises(InversionDiverged):
        invert_laplace(lambda q: complex("nan"), 1.0)
