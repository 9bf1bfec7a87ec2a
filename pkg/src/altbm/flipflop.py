"""Standard flip-flop coupled to a Brownian skeleton, plus the two basic
generator builders.

The flip-flop of rate λ alternates down-sojourns ``D_k / sqrt(λ)`` and
up-sojourns ``U_k / sqrt(λ)`` where ``D_k = C_k - M_k`` and
``U_k = C_{k+1} - M_k`` come from a Brownian skeleton observed at
Poisson(λ/2) epochs.  Its level at ``χ_k = ξ_{2k}`` therefore equals
``C_k`` and its minimum over ``[χ_k, χ_{k+1}]`` equals ``M_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .paths import BrownianSkeleton, FluidPath, PhasePath, integrate_phase, interval_minima
from .sampling import RandomStream, poisson_epochs

E_STATES = (1, -1)
E2_STATES = ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class GeneratorMatrix:
    states: tuple
    Q: np.ndarray

    def __post_init__(self):
        q = np.array(self.Q, dtype=float) + 0.0  # no signed zeros
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] != len(self.states):
            raise InvalidInput("generator shape does not match its state labels")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            raise InvalidInput("generator has a negative off-diagonal entry")
        scale = max(1.0, float(np.max(np.abs(q))))
        if np.any(np.abs(q.sum(axis=1)) > 1e-12 * scale):
            raise InvalidInput("generator rows do not sum to zero")
        q.setflags(write=False)
        object.__setattr__(self, "Q", q)

    def index(self, state) -> int:
        return self.states.index(tuple(state) if isinstance(state, (list, tuple, np.ndarray)) else state)


@dataclass(frozen=True, eq=False)
class CoupledPair:
    lam: float
    skeleton: BrownianSkeleton
    phase: PhasePath
    fluid: FluidPath
    chi: np.ndarray

    @property
    def down(self) -> np.ndarray:
        return self.skeleton.values[:-1] - self.skeleton.minima

    @property
    def up(self) -> np.ndarray:
        return self.skeleton.values[1:] - self.skeleton.minima


def skeleton_from_draws(epochs, down, up) -> BrownianSkeleton:
    """Skeleton with ``M_k = C_k - D_k`` and ``C_{k+1} = M_k + U_k``."""
    down = np.asarray(down, dtype=float)
    up = np.asarray(up, dtype=float)
    if down.shape != up.shape or len(epochs) != len(down) + 1:
        raise InvalidInput("need K+1 epochs and K down/up draws")
    if np.any(down <= 0) or np.any(up <= 0):
        raise InvalidInput("Wiener-Hopf draws must be positive")
    values = np.concatenate(([0.0], np.cumsum(up - down)))
    minima = values[:-1] - down
    return BrownianSkeleton(np.asarray(epochs, dtype=float), values, minima)


def sample_skeleton(epochs, s: RandomStream) -> BrownianSkeleton:
    """Exact Brownian skeleton at the given epochs.

    Increments are N(0, Δθ); the interval minimum given the increment ``b``
    is the Brownian-bridge minimum ``(b - sqrt(b^2 - 2Δθ log V))/2`` with V
    uniform.  With Poisson(λ/2) epochs the resulting ``C_k - M_k`` and
    ``C_{k+1} - M_k`` are independent exp(sqrt(λ)) variables.
    """
    epochs = np.asarray(epochs, dtype=float)
    dt = np.diff(epochs)
    b = s.substream("wh-increment").normal(0.0, dt, size=len(dt))
    v = s.substream("wh-minimum").uniform(len(dt))
    rel_min = 0.5 * (b - np.sqrt(b * b - 2.0 * dt * np.log(v)))
    down = -rel_min
    up = b - rel_min
    return skeleton_from_draws(epochs, down, up)


def couple_skeleton(lam: float, skeleton: BrownianSkeleton) -> CoupledPair:
    """Build the flip-flop of rate ``lam`` from a skeleton (J(0) = -1)."""
    if not lam > 0:
        raise InvalidInput(f"lambda must be positive, got {lam}")
    root = math.sqrt(lam)
    c, m = skeleton.values, skeleton.minima
    k = skeleton.count
    down = c[:-1] - m
    up = c[1:] - m
    sojourns = np.empty(2 * k)
    sojourns[0::2] = down / root
    sojourns[1::2] = up / root
    xi = np.concatenate(([0.0], np.cumsum(sojourns)))
    states = np.tile(np.array([-1, 1], dtype=np.int64), k)
    levels = np.empty(2 * k + 1)
    levels[0::2] = c
    levels[1::2] = m
    slopes = root * states.astype(float)
    return CoupledPair(
        lam=float(lam),
        skeleton=skeleton,
        phase=PhasePath(xi, states),
        fluid=FluidPath(xi, levels, slopes),
        chi=xi[0::2].copy(),
    )


def wh_couple(lam: float, count: int | None, s: RandomStream, epochs=None,
              horizon: float | None = None) -> CoupledPair:
    """Couple a rate-``lam`` flip-flop with a Brownian skeleton.

    Epochs are either supplied (e.g. one level of a nested Poisson family)
    or drawn as Poisson(lam/2): the first ``count`` arrivals, or all
    arrivals in (0, horizon].  Epochs and Brownian draws use disjoint
    substreams.
    """
    if epochs is None:
        if count is not None and count < 1:
            raise InvalidInput("need at least one skeleton epoch")
        epochs = poisson_epochs(lam / 2, s.substream("theta"), horizon=horizon, count=count)
    return couple_skeleton(lam, sample_skeleton(epochs, s))


def build_standard_generator(lam: float) -> GeneratorMatrix:
    if not lam > 0:
        raise InvalidInput(f"lambda must be positive, got {lam}")
    return GeneratorMatrix(E_STATES, np.array([[-lam, lam], [lam, -lam]]))


def build_independent_bivariate_generator(lam: float) -> GeneratorMatrix:
    """Kronecker sum Λ⊕Λ on (1,1), (1,-1), (-1,1), (-1,-1)."""
    base = build_standard_generator(lam).Q
    eye = np.eye(2)
    return GeneratorMatrix(E2_STATES, np.kron(base, eye) + np.kron(eye, base))


def misalignment(theta, chi, horizon: float = math.inf) -> float:
    """max |θ_k - χ_k| over k >= 1 with both epochs below ``horizon``."""
    theta = np.asarray(theta, dtype=float)[1:]
    chi = np.asarray(chi, dtype=float)[1:]
    n = min(len(theta), len(chi))
    theta, chi = theta[:n], chi[:n]
    keep = (theta < horizon) & (chi < horizon)
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(theta[keep] - chi[keep])))


def coupling_diagnostics(pair: CoupledPair, horizon: float = math.inf) -> dict:
    """Epoch misalignment and the residuals of the two built-in identities.

    The fluid path is re-integrated from the phase path so the residuals
    test the sojourn arithmetic, not the stored levels.
    """
    sk = pair.skeleton
    fluid = integrate_phase(pair.phase, math.sqrt(pair.lam))
    f_chi = fluid.levels[0::2]
    minima = interval_minima(fluid, pair.chi)
    return {
        "misalignment": misalignment(sk.epochs, pair.chi, horizon),
        "value_residual": float(np.max(np.abs(f_chi - sk.values))),
        "minimum_residual": float(np.max(np.abs(minima - sk.minima))) if sk.count else 0.0,
    }
