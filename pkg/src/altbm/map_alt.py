"""MAP alternating two-dimensional Brownian motion.

B* flips the sign of B's increments at every arrival of a Markovian
arrival process MAP(b, C, D).  Besides the flip-flop construction this
module carries the analytic side: the Laplace transform of
E[B(t) B*(t)] with its numerical inversion, plus an independent
time-domain expression used to cross-check the inversion.

Laplace transforms here use the kernel e^{-qt}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alternation import (
    BivariateFlipFlopPath,
    DriverPath,
    arrival_epochs,
    assemble_bivariate,
    build_schedule,
    run_replication,
)
from .errors import InvalidInput, InvalidMap, RangeViolation, RateTooSmall
from .flipflop import E2_STATES, GeneratorMatrix
from .numerics import (
    DEFAULT_INVERSION_TOL,
    DEFAULT_TERMS,
    as_matrix,
    invert_laplace,
    mat_exp,
    solve_linear,
)
from .sampling import RandomStream

TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MapParams:
    """Continuous-time MAP: initial law ``b``, hidden intensities ``C``,
    arrival intensities ``D``; ``C + D`` generates the phase process."""
    b: np.ndarray
    C: np.ndarray
    D: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        try:
            b = np.atleast_1d(np.array(self.b, dtype=float))
            c = as_matrix(np.array(self.C, dtype=float), square=True)
            d = as_matrix(np.array(self.D, dtype=float), square=True)
        except (InvalidInput, ValueError, TypeError) as exc:
            raise InvalidMap(f"malformed MAP parameters: {exc}") from None
        for arr in (b, c, d):
            arr.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", c)
        object.__setattr__(self, "D", d)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(len(b))))
        _check_map(self)

    @property
    def size(self) -> int:
        return len(self.b)

    @property
    def max_exit_rate(self) -> float:
        return float(np.max(-np.diag(self.C)))


def _check_map(m: MapParams):
    n = len(m.b)
    if m.C.shape != (n, n) or m.D.shape != (n, n):
        raise InvalidMap(f"shape mismatch: |b|={n}, C{m.C.shape}, D{m.D.shape}")
    if len(m.labels) != n:
        raise InvalidMap("one label per phase required")
    if not np.all(np.isfinite(m.b)) or np.any(m.b < 0) or abs(m.b.sum() - 1) > TOL:
        raise InvalidMap("b must be a probability vector")
    if np.any(m.D < 0):
        raise InvalidMap("D has a negative entry")
    off = m.C - np.diag(np.diag(m.C))
    if np.any(off < 0):
        raise InvalidMap("C has a negative off-diagonal entry")
    if np.any(np.diag(m.C) >= 0):
        raise InvalidMap("C diagonal must be strictly negative")
    scale = max(1.0, float(np.max(np.abs(m.C))))
    if np.any(np.abs((m.C + m.D).sum(axis=1)) > TOL * scale):
        raise InvalidMap("rows of C + D must sum to zero")


def validate_map(m: MapParams) -> MapParams:
    _check_map(m)
    return m


@dataclass(frozen=True, eq=False)
class DiscreteMapParams:
    b: np.ndarray
    A0: np.ndarray
    A1: np.ndarray

    def __post_init__(self):
        if np.any(self.A0 < 0) or np.any(self.A1 < 0):
            raise InvalidInput("discrete MAP matrices must be nonnegative")
        if np.any(np.abs((self.A0 + self.A1).sum(axis=1) - 1) > TOL):
            raise InvalidInput("A0 + A1 must be stochastic")


def discretize_map(m: MapParams, gamma: float) -> DiscreteMapParams:
    """(b, I + C/γ, D/γ) for γ >= max_i |C_ii|."""
    if gamma < m.max_exit_rate:
        raise RateTooSmall(f"gamma = {gamma} below max|C_ii| = {m.max_exit_rate}")
    a0 = np.eye(m.size) + m.C / gamma
    # γ = |C_ii| exactly may leave -1e-17 on the diagonal
    a0[(a0 < 0) & (a0 > -TOL)] = 0.0
    return DiscreteMapParams(m.b.copy(), a0, m.D / gamma)


@dataclass(frozen=True, eq=False)
class PhaseTypeParams:
    """PH(b, T); ``b`` may be a sub-probability vector."""
    b: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b))
        t = np.asarray(self.T)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "T", t)
        if np.iscomplexobj(b) or np.iscomplexobj(t):
            return  # complex arguments only arise inside Laplace inversion
        if t.shape != (len(b), len(b)):
            raise InvalidInput("T must be square and match b")
        off = t - np.diag(np.diag(t))
        if np.any(off < 0) or np.any(t.sum(axis=1) > TOL * max(1.0, np.abs(t).max())):
            raise InvalidInput("T is not a subintensity matrix")


def ph_mean(p: PhaseTypeParams):
    """Mean absorption time b(-T^{-1})e, by a linear solve."""
    return p.b @ solve_linear(-p.T, np.ones(len(p.b)))


def _check_q(q):
    if isinstance(q, complex) or np.iscomplexobj(q):
        if not q.real > 0:
            raise InvalidInput("Laplace argument needs positive real part")
    elif not (q > 0 and math.isfinite(q)):
        raise InvalidInput(f"q must be positive, got {q}")


def cov_laplace(m: MapParams, q):
    """∫_0^∞ e^{-qt} E[B(t)B*(t)] dt
    = -(1/q) b [I + (C-qI)^{-1} D] [C - qI - D (C-qI)^{-1} D]^{-1} e.

    Real q gives a float; complex q (used by the inverter) a complex.
    """
    _check_q(q)
    n = m.size
    g = m.C - q * np.eye(n)
    x = solve_linear(g, m.D)
    schur = g - m.D @ x
    row = m.b + m.b @ x
    value = -(row @ solve_linear(schur, np.ones(n))) / q
    return complex(value) if np.iscomplexobj(value) else float(value)


def cov_laplace_occupation(m: MapParams, q: float) -> float:
    """Same transform assembled from two phase-type means: expected time
    with an even arrival count before an independent exp(q) clock, minus
    the expected time with an odd count, divided by q."""
    _check_q(q)
    n = m.size
    resolvent_d = solve_linear(q * np.eye(n) - m.C, m.D)     # (qI - C)^{-1} D
    sub = (m.C - q * np.eye(n)) + m.D @ resolvent_d
    even = ph_mean(PhaseTypeParams(m.b, sub))
    odd = ph_mean(PhaseTypeParams(m.b @ resolvent_d, sub))
    return float((even - odd) / q)


def cov_oracle(m: MapParams, t: float) -> float:
    """E[B(t)B*(t)] = ∫_0^t b exp((C-D)s) e ds.

    E[(-1)^{K(s)} 1{phase j}] evolves under C - D: a hidden transition keeps
    the sign and an arrival flips it.  The integral is the top-right column
    of exp([[C-D, e], [0, 0]] t).
    """
    if t < 0:
        raise InvalidInput("t must be nonnegative")
    n = m.size
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = m.C - m.D
    aug[:n, n] = 1.0
    return float(m.b @ mat_exp(aug, t)[:n, n])


def cov_time_domain(m: MapParams, t: float, terms: int = DEFAULT_TERMS,
                    tolerance: float = DEFAULT_INVERSION_TOL) -> float:
    """E[B(t)B*(t)] by Euler inversion of :func:`cov_laplace`."""
    return invert_laplace(lambda q: cov_laplace(m, q), t, terms=terms, tolerance=tolerance)


def corr_map(m: MapParams, t: float, terms: int = DEFAULT_TERMS,
             tolerance: float = DEFAULT_INVERSION_TOL) -> float:
    value = cov_time_domain(m, t, terms, tolerance) / t
    if abs(value) > 1 + 1e-9:
        raise RangeViolation(f"correlation {value} outside [-1, 1] at t={t}")
    return max(-1.0, min(1.0, value))


def build_map_alt_generator(lambda_n: float, m: MapParams) -> GeneratorMatrix:
    """Q_n on E^2 x S, blocks ordered (1,1), (1,-1), (-1,1), (-1,-1)."""
    lam = float(lambda_n)
    if lam < 2 * m.max_exit_rate:
        raise RateTooSmall(f"lambda_n = {lam} below 2*max|C_ii| = {2 * m.max_exit_rate}")
    n = m.size
    eye = np.eye(n)
    zero = np.zeros((n, n))
    stay = lam * eye + 2 * m.C
    arrive = 2 * m.D
    q = np.block([
        [-lam * eye, zero, arrive, stay],
        [zero, -lam * eye, stay, arrive],
        [zero, lam * eye, -lam * eye, zero],
        [lam * eye, zero, zero, -lam * eye],
    ])
    states = tuple((j1, j2, u) for (j1, j2) in E2_STATES for u in m.labels)
    return GeneratorMatrix(states, q)


def initial_distribution(m: MapParams) -> np.ndarray:
    """(0, 0, 0, b): the phase process starts in (-1, -1) x S."""
    return np.concatenate((np.zeros(3 * m.size), m.b))


def driver_rate(m: MapParams, gamma: float | None = None) -> float:
    return max(m.max_exit_rate, float(gamma or 0.0))


def build_map_alternating_pair(m: MapParams, lambda_n: float, family, coupled, driver: DriverPath,
                               n: int | None = None) -> BivariateFlipFlopPath:
    """Bivariate flip-flop driven by the level-0 discrete MAP ``driver``.

    Synchronisation flips at MAP arrivals; the phase states carry the MAP
    phase seen at the last χ epoch as a third coordinate.
    """
    if n is None:
        n = int(np.argmin([abs(r - lambda_n) for r in family.rates]))
    if len(driver.phase) != len(family.epochs[0]):
        raise InvalidInput("driver must have one state per level-0 epoch")
    schedule = build_schedule(family, driver, driver.count % 2, arrival_epochs(driver.count))
    return assemble_bivariate(lambda_n, family, n, coupled, schedule, phases=driver.phase)


def simulate_map_alternating(m: MapParams, lambdas, s: RandomStream, gamma: float | None = None,
                             horizon: float | None = None, count: int | None = None):
    """One replication with λ_0 = 2γ, γ = max(max|C_ii|, gamma).

    Returns ``(family, schedule, {rate: BivariateFlipFlopPath})``.
    """
    g = driver_rate(m, gamma)
    dm = discretize_map(m, g)
    return run_replication(
        2 * g, lambdas, s, dm.b, dm.A0, dm.A1,
        sign_of=lambda d: d.count % 2,
        ell_of=lambda d: arrival_epochs(d.count),
        horizon=horizon, count=count, with_phase=True,
    )


def phase_index(m: MapParams, states: np.ndarray) -> np.ndarray:
    """Row index in Q_n of each (J1, J2, u) state row."""
    block = np.where(states[:, 0] == 1, np.where(states[:, 1] == 1, 0, 1),
                     np.where(states[:, 1] == 1, 2, 3))
    return block * m.size + states[:, 2]


__all__ = [
    "MapParams", "DiscreteMapParams", "PhaseTypeParams", "validate_map", "discretize_map",
    "ph_mean", "cov_laplace", "cov_laplace_occupation", "cov_oracle", "cov_time_domain",
    "corr_map", "build_map_alt_generator", "initial_distribution", "build_map_alternating_pair",
    "simulate_map_alternating", "phase_index",
]
