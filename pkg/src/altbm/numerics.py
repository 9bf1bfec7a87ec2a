"""Small dense linear algebra and numerical Laplace inversion.

Everything here operates on tiny matrices (at most a few dozen rows), so
clarity wins over speed.  Complex inputs are accepted wherever the Laplace
inversion needs to evaluate a transform off the real axis.
"""
import math
import warnings
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import InvalidInput, InversionDiverged, SingularMatrix

PIVOT_RTOL = 1e-12
DEFAULT_TERMS = 41
DEFAULT_INVERSION_TOL = 1e-8


def as_matrix(a, square: bool = False) -> np.ndarray:
    """Coerce to a finite 2-D float (or complex) array."""
    m = np.asarray(a)
    if m.dtype.kind not in "fc":
        m = m.astype(float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInput(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput("matrix has non-finite entries")
    if square and m.shape[0] != m.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {m.shape}")
    return m


def solve_linear(a, y) -> np.ndarray:
    """Solve ``a @ x = y`` by LU with partial pivoting.

    Raises SingularMatrix when a pivot falls below ``1e-12 * max|a|``; in
    this package that usually means a Laplace argument sits on an
    eigenvalue or a generator is degenerate.
    """
    a = as_matrix(a, square=True)
    y = np.asarray(y)
    if y.shape[0] != a.shape[0]:
        raise InvalidInput(f"right-hand side has {y.shape[0]} rows, matrix has {a.shape[0]}")
    scale = np.max(np.abs(a))
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < PIVOT_RTOL * scale:
        raise SingularMatrix(f"pivot {pivots.min():.3g} below tolerance (max|A| = {scale:.3g})")
    return scipy.linalg.lu_solve((lu, piv), y, check_finite=False)


def solve_left(a, b) -> np.ndarray:
    """Row-vector solve: returns x with ``x @ a = b``."""
    a = as_matrix(a, square=True)
    return solve_linear(a.T, np.asarray(b))


def is_generator(q, atol: float = 1e-12) -> bool:
    q = np.asarray(q)
    if q.ndim != 2 or q.shape[0] != q.shape[1] or np.iscomplexobj(q):
        return False
    off = q - np.diag(np.diag(q))
    scale = max(1.0, float(np.max(np.abs(q))))
    return bool(np.all(off >= 0) and np.all(np.abs(q.sum(axis=1)) <= atol * scale))


def _expm_uniformized(q: np.ndarray, t: float) -> np.ndarray:
    n = q.shape[0]
    rate = float(np.max(-np.diag(q)))
    if rate == 0.0:
        return np.eye(n)
    # halve the horizon until rate*t <= 1, then square back up;
    # squaring stochastic matrices keeps entries nonnegative
    squarings = max(0, math.ceil(math.log2(rate * t))) if rate * t > 1 else 0
    h = t / 2**squarings
    p = np.eye(n) + q / rate
    weight = math.exp(-rate * h)
    term = np.eye(n)
    out = weight * term
    k = 0
    while True:
        k += 1
        weight *= rate * h / k
        term = term @ p
        out = out + weight * term
        if weight < 1e-18 and k > rate * h:
            break
    for _ in range(squarings):
        out = out @ out
    out[out < 0] = 0.0
    return out / out.sum(axis=1, keepdims=True)


def _expm_taylor(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    norm = np.max(np.abs(a).sum(axis=1))
    squarings = max(0, math.ceil(math.log2(norm)) + 1) if norm > 0.5 else 0
    a = a / 2**squarings
    out = np.eye(n, dtype=a.dtype)
    term = np.eye(n, dtype=a.dtype)
    for k in range(1, 40):
        term = term @ a / k
        out = out + term
        if np.max(np.abs(term)) < 1e-18 * np.max(np.abs(out)):
            break
    for _ in range(squarings):
        out = out @ out
    return out


def mat_exp(q, t: float = 1.0) -> np.ndarray:
    """Return exp(q*t).

    Conservative generators go through uniformization, so the result is a
    proper stochastic matrix; anything else uses scaling and squaring on a
    truncated Taylor series.
    """
    q = as_matrix(q, square=True)
    if t < 0 or not math.isfinite(t):
        raise InvalidInput(f"t must be finite and nonnegative, got {t}")
    if t == 0:
        return np.eye(q.shape[0], dtype=q.dtype)
    if is_generator(q, atol=1e-12):
        return _expm_uniformized(q, t)
    return _expm_taylor(q * t)


def _euler_weights(m: int) -> np.ndarray:
    return np.array([math.comb(m, j) for j in range(m + 1)], dtype=float) / 2.0**m


def invert_laplace(
    f: Callable[[complex], complex],
    t: float,
    terms: int = DEFAULT_TERMS,
    tolerance: float = DEFAULT_INVERSION_TOL,
) -> float:
    """Euler-summation inversion of a Laplace transform at time ``t``.

    Uses ``terms = 2M+1`` abscissas ``(A + i*pi*k)/t`` with
    ``A = M ln(10)/3``; the alternating partial sums are binomially
    averaged over their last ``M+1`` members.  ``f`` must accept complex
    arguments.  The averaged sum is recomputed one partial sum earlier and
    InversionDiverged is raised if the two disagree by more than
    ``tolerance * (1 + |result|)``.
    """
    if not (t > 0 and math.isfinite(t)):
        raise InvalidInput(f"t must be positive, got {t}")
    if terms < 5 or terms % 2 == 0:
        raise InvalidInput(f"terms must be odd and >= 5, got {terms}")
    m = (terms - 1) // 2
    shift = m * math.log(10.0) / 3.0
    k = np.arange(terms)
    nodes = (shift + 1j * math.pi * k) / t
    values = np.array([complex(f(s)) for s in nodes])
    if not np.all(np.isfinite(values)):
        raise InversionDiverged("transform is not finite on the inversion abscissas")
    series = ((-1.0) ** k) * values.real
    series[0] *= 0.5
    partial = np.cumsum(series)
    w = _euler_weights(m)
    scale = math.exp(shift) / t
    result = scale * float(w @ partial[m : 2 * m + 1])
    previous = scale * float(w @ partial[m - 1 : 2 * m])
    if not math.isfinite(result) or abs(result - previous) > tolerance * (1.0 + abs(result)):
        raise InversionDiverged(
            f"Euler sums did not settle at t={t}: {result!r} vs {previous!r}"
        )
    return result
