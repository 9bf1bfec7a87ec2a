"""Exponentially alternating two-dimensional Brownian motion.

The driver X on {0, 1} (0 = synchronised) has intensity matrix
``[[-α, α], [β, -β]]`` and is built by uniformization at rate
``γ = α + β`` on the slowest Poisson level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alternation import (
    BivariateFlipFlopPath,
    DriverPath,
    assemble_bivariate,
    build_schedule,
    nesting_index_map,
    run_replication,
    switching_epochs,
)
from .errors import InvalidInput, RateTooSmall
from .flipflop import E2_STATES, GeneratorMatrix
from .sampling import RandomStream

__all__ = [
    "ExpAltParams",
    "uniformized_chain",
    "switching_epochs",
    "nesting_index_map",
    "build_alternating_pair",
    "simulate_exp_alternating",
    "build_exp_alt_generator",
    "corr_exp",
    "covariance_exp",
    "cov_laplace_exp",
]

SYNC, DESYNC = "sync", "desync"


@dataclass(frozen=True)
class ExpAltParams:
    alpha: float
    beta: float
    start: str = SYNC

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidInput(f"{name} must be a positive finite rate, got {v!r}")
        if self.start not in (SYNC, DESYNC):
            raise InvalidInput(f"start must be 'sync' or 'desync', got {self.start!r}")

    @property
    def gamma(self) -> float:
        return self.alpha + self.beta

    @property
    def Pi(self) -> np.ndarray:
        return np.array([[-self.alpha, self.alpha], [self.beta, -self.beta]])

    @property
    def initial(self) -> np.ndarray:
        return np.array([1.0, 0.0]) if self.start == SYNC else np.array([0.0, 1.0])

    @property
    def parity_offset(self) -> int:
        """1 when B* starts mirrored.  The arrival parity of :meth:`as_map`
        counts switches since time 0, so B* = (-1)^offset times the MAP
        version of B*."""
        return 0 if self.start == SYNC else 1

    def as_map(self):
        """Two-state MAP whose phase is X and whose arrivals are X's jumps."""
        from .map_alt import MapParams

        a, b = self.alpha, self.beta
        return MapParams(self.initial, np.diag([-a, -b]), np.array([[0.0, a], [b, 0.0]]))


def uniformized_chain(params: ExpAltParams, rate: float) -> np.ndarray:
    """P = I + Π / rate."""
    if not rate > 0:
        raise RateTooSmall(f"uniformization rate must be positive, got {rate}")
    p = np.eye(2) + params.Pi / rate
    if np.any(np.diag(p) < 0):
        raise RateTooSmall(f"rate {rate} below max(alpha, beta) = {max(params.alpha, params.beta)}")
    return p


def build_alternating_pair(params: ExpAltParams, lambda_n: float, family, coupled, driver,
                           n: int | None = None) -> BivariateFlipFlopPath:
    """Bivariate flip-flop at one level of ``family`` from a level-0 driver.

    ``driver`` is the 0/1 trajectory Y(0..K0) of the uniformized chain.
    """
    if lambda_n < 2 * params.gamma * (1 - 1e-12):
        raise RateTooSmall(f"lambda_n = {lambda_n} below lambda_0 = {2 * params.gamma}")
    y = np.asarray(driver, dtype=np.int64)
    if n is None:
        n = int(np.argmin([abs(r - lambda_n) for r in family.rates]))
    if len(y) != len(family.epochs[0]):
        raise InvalidInput("driver must have one state per level-0 epoch")
    counts = np.concatenate(([0], np.cumsum(y[1:] != y[:-1])))
    schedule = build_schedule(family, DriverPath(y, counts), y, switching_epochs(y))
    return assemble_bivariate(lambda_n, family, n, coupled, schedule)


def simulate_exp_alternating(params: ExpAltParams, lambdas, s: RandomStream,
                             horizon: float | None = None, count: int | None = None):
    """One replication: nested family with λ_0 = 2γ, driver, and a bivariate
    flip-flop for each rate in ``lambdas``.

    Returns ``(family, schedule, {rate: BivariateFlipFlopPath})``.
    """
    m = params.as_map()
    gamma = params.gamma
    a0 = np.eye(2) + m.C / gamma
    a1 = m.D / gamma
    return run_replication(
        2 * gamma, lambdas, s, m.b, a0, a1,
        sign_of=lambda d: d.phase,
        ell_of=lambda d: switching_epochs(d.phase),
        horizon=horizon, count=count, with_phase=False,
    )


def build_exp_alt_generator(lambda_n: float, params: ExpAltParams) -> GeneratorMatrix:
    """Intensity matrix of (J1, J2) on (1,1), (1,-1), (-1,1), (-1,-1)."""
    a, b, lam = params.alpha, params.beta, float(lambda_n)
    if lam < 2 * max(a, b):
        raise RateTooSmall(f"lambda_n = {lam} below 2*max(alpha, beta) = {2 * max(a, b)}")
    q = np.array([
        [-lam, 0.0, 2 * a, lam - 2 * a],
        [0.0, -lam, lam - 2 * b, 2 * b],
        [0.0, lam, -lam, 0.0],
        [lam, 0.0, 0.0, -lam],
    ])
    return GeneratorMatrix(E2_STATES, q)


def corr_exp(params: ExpAltParams, t: float) -> float:
    """Correlation of B(t) and B*(t).

    Synchronised start: ``ρ∞ + 2α(1 - e^{-γt}) / (tγ²)``; desynchronised
    start: ``ρ∞ - 2β(1 - e^{-γt}) / (tγ²)``, with
    ``ρ∞ = (1/α - 1/β) / (1/α + 1/β)``.  t = 0 is rejected (the formula is
    0/0 there; the synchronised limit is 1).
    """
    if not (t > 0 and math.isfinite(t)):
        raise InvalidInput(f"t must be positive and finite, got {t}")
    a, b, g = params.alpha, params.beta, params.gamma
    limit = (1 / a - 1 / b) / (1 / a + 1 / b)
    transient = -math.expm1(-g * t) / (t * g * g)
    if params.start == SYNC:
        return limit + 2 * a * transient
    return limit - 2 * b * transient


def covariance_exp(params: ExpAltParams, t: float) -> float:
    """E[B(t) B*(t)] = t * Corr(t); zero at t = 0."""
    return 0.0 if t == 0 else t * corr_exp(params, t)


def cov_laplace_exp(params: ExpAltParams, q: float) -> float:
    """∫_0^∞ e^{-qt} E[B(t)B*(t)] dt in closed form.

    Synchronised start: ``q^{-1}[(β-α)/(γq) + 2α/(γ(γ+q))]``; the
    desynchronised start replaces ``2α`` by ``-2β``.
    """
    if not (q > 0 and math.isfinite(q)):
        raise InvalidInput(f"q must be positive, got {q}")
    a, b, g = params.alpha, params.beta, params.gamma
    weight = 2 * a if params.start == SYNC else -2 * b
    return ((b - a) / (g * q) + weight / (g * (g + q))) / q
