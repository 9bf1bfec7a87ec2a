"""Machinery shared by the exponential and MAP alternating constructions.

A driver chain runs on the arrivals of the slowest Poisson level.  Its
switching (or arrival) indices are pushed up the nested family to find the
synchronisation / desynchronisation epochs ``S^n_k = χ^n_{ν_n(k)}`` of the
level-n flip-flop, and the second phase coordinate is the first one with
its sign flipped on every other ``[S^n_k, S^n_{k+1})``.

Stream layout of one replication (every construction uses the same names,
so an exponential-case MAP reproduces the exponential schedule exactly):

* ``driver``  -- initial state and transitions of the level-0 chain
* ``family``  -- nested Poisson family (``poisson-level-n`` below it)
* ``flipflop-level-n`` -- Brownian skeleton draws at level n
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IndexBeyondHorizon, InvalidInput, RateTooSmall
from .flipflop import CoupledPair, wh_couple
from .paths import FluidPath, PhasePath
from .sampling import NestedPoissonFamily, RandomStream, build_nested_family

E2_INDEX = {(1, 1): 0, (1, -1): 1, (-1, 1): 2, (-1, -1): 3}


@dataclass(frozen=True, eq=False)
class DriverPath:
    """Level-0 driver: ``phase[m]`` is the chain state after m arrivals of the
    slowest Poisson process and ``count[m]`` the number of MAP arrivals so
    far (for a plain two-state chain, the number of switches)."""
    phase: np.ndarray
    count: np.ndarray


def simulate_driver(b, a0, a1, steps: int, s: RandomStream) -> DriverPath:
    """Run a discrete-time MAP with no-arrival matrix ``a0`` and arrival
    matrix ``a1`` for ``steps`` transitions.

    One uniform picks the initial state, then one uniform per step selects
    among the outcomes ``[a0[i, 0..], a1[i, 0..]]`` by inverse CDF.
    """
    b = np.asarray(b, dtype=float)
    a0 = np.asarray(a0, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    size = len(b)
    table = np.cumsum(np.hstack((a0, a1)), axis=1)
    u0 = float(s.uniform())
    state = int(min(np.searchsorted(np.cumsum(b), u0 * b.sum(), side="right"), size - 1))
    u = s.uniform(steps) if steps > 0 else np.empty(0)
    phase = np.empty(steps + 1, dtype=np.int64)
    count = np.empty(steps + 1, dtype=np.int64)
    phase[0], count[0] = state, 0
    arrivals = 0
    rows = [table[i] for i in range(size)]
    for m in range(steps):
        row = rows[state]
        pick = int(np.searchsorted(row, u[m] * row[-1], side="right"))
        if pick >= 2 * size:
            pick = 2 * size - 1
        if pick >= size:
            arrivals += 1
            state = pick - size
        else:
            state = pick
        phase[m + 1] = state
        count[m + 1] = arrivals
    return DriverPath(phase, count)


def switching_epochs(trajectory) -> np.ndarray:
    """ℓ(0) = 0 and ℓ(k) = first index after ℓ(k-1) where the value changes."""
    y = np.asarray(trajectory)
    if len(y) == 0:
        raise InvalidInput("empty trajectory")
    changes = np.flatnonzero(y[1:] != y[:-1]) + 1
    return np.concatenate(([0], changes)).astype(np.int64)


def arrival_epochs(counts) -> np.ndarray:
    """ℓ(k) = inf{m : M(m) = k} for a nondecreasing unit-step counting sequence."""
    counts = np.asarray(counts)
    return np.searchsorted(counts, np.arange(counts[-1] + 1), side="left").astype(np.int64)


def nesting_index_map(family: NestedPoissonFamily, n: int, ell) -> np.ndarray:
    """ν_n: level-n indices of the level-0 arrivals ``ell``."""
    ell = np.asarray(ell, dtype=np.int64)
    if not 0 <= n < family.levels:
        raise InvalidInput(f"level {n} not in family with {family.levels} levels")
    if len(ell) and (ell.max() >= len(family.epochs[0]) or ell.min() < 0):
        raise IndexBeyondHorizon("a switching epoch lies beyond the simulated level-0 arrivals")
    return family.embed(ell, n)


def signed_running(x: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """y_0 = 0 and y_i - y_{i-1} = signs[i-1] * (x_i - x_{i-1}), x_0 = 0.

    Evaluated block by block over runs of constant sign, y_i = y_a +
    s (x_i - x_a), so a constant sign returns exactly ``s * x`` and rounding
    accumulates once per sign change rather than once per step.
    """
    x = np.asarray(x, dtype=float)
    signs = np.asarray(signs, dtype=float)
    if len(signs) == 0:
        return np.zeros(1)
    starts = np.concatenate(([0], np.flatnonzero(signs[1:] != signs[:-1]) + 1))
    ends = np.concatenate((starts[1:], [len(signs)]))
    block_sign = signs[starts]
    anchor = np.concatenate(([0.0], np.cumsum(block_sign * (x[ends] - x[starts]))))[:-1]
    block = np.repeat(np.arange(len(starts)), ends - starts)
    a = starts[block]
    y = anchor[block] + block_sign[block] * (x[1:] - x[a])
    return np.concatenate(([0.0], y))


@dataclass(frozen=True, eq=False)
class AlternationSchedule:
    ell: np.ndarray
    nu: dict
    S: dict
    driver: DriverPath
    # 0/1 per level-0 index; the second coordinate is mirrored where it is 1
    sign_index: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class BivariateFlipFlopPath:
    """Phase path on E^2 (or E^2 x S) and the two fluid coordinates.

    ``sign_levels[j]`` is the 0/1 sync indicator on ``[χ_j, χ_{j+1})`` read
    directly off the driver (Y_n in the exponential case, MAP parity in the
    other), which is what the skeleton of B* is built from.
    """
    lam: float
    phase: PhasePath
    fluid1: FluidPath
    fluid2: FluidPath
    s_epochs: np.ndarray
    coupled: CoupledPair
    sign_levels: np.ndarray

    def bstar_skeleton(self) -> np.ndarray:
        """B*(θ_k) = Σ_{i<=k} (-1)^{Y_n(i-1)} (C_i - C_{i-1})."""
        c = self.coupled.skeleton.values
        return signed_running(c, 1.0 - 2.0 * self.sign_levels[: len(c) - 1])

    def sync_flags(self) -> np.ndarray:
        """1 on synchronised intervals of the phase path, 0 on mirrored ones."""
        return (self.phase.states[:, 0] == self.phase.states[:, 1]).astype(np.int64)

    def to_rows(self):
        """CSV rows: t, F1, F2, J1, J2, sync (one per breakpoint)."""
        sync = self.sync_flags()
        st = self.phase.states
        n = len(st)
        for i, t in enumerate(self.phase.times):
            k = min(i, n - 1)
            yield (float(t), float(self.fluid1.levels[i]), float(self.fluid2.levels[i]),
                   int(st[k, 0]), int(st[k, 1]), int(sync[k]))


def build_schedule(family: NestedPoissonFamily, driver: DriverPath, sign_index, ell) -> AlternationSchedule:
    ell = np.asarray(ell, dtype=np.int64)
    nu, S = {}, {}
    for n in range(family.levels):
        nu[n] = nesting_index_map(family, n, ell)
        # χ^n_j has the same index as θ^n_j; the χ values live on the coupled pair,
        # so S is filled in once the level-n flip-flop exists
        S[n] = None
    return AlternationSchedule(ell, nu, S, driver, np.asarray(sign_index, dtype=np.int64))


def assemble_bivariate(lam: float, family: NestedPoissonFamily, n: int, coupled: CoupledPair,
                       schedule: AlternationSchedule, phases=None) -> BivariateFlipFlopPath:
    """Second phase coordinate from the S-epochs, then both fluid coordinates.

    ``phases`` (the driver's level-0 state sequence) adds the third
    coordinate U^n used by the MAP construction.
    """
    if not np.array_equal(coupled.skeleton.epochs, family.epochs[n]):
        raise InvalidInput("coupled pair must be built on the level-n epochs of the family")
    nu = schedule.nu[n]
    chi = coupled.chi
    if len(nu) and nu.max() >= len(chi):
        raise IndexBeyondHorizon("switching epoch beyond the level-n skeleton")
    s_epochs = chi[nu]
    schedule.S[n] = s_epochs
    j1 = coupled.phase.states
    xi = coupled.phase.times
    start = int(schedule.sign_index[0])
    # number of S_k (k >= 1) at or before each interval start
    passed = np.searchsorted(s_epochs[1:], xi[:-1], side="right")
    flip = (start + passed) % 2
    j2 = np.where(flip == 1, -j1, j1)
    # driver state seen at each level-n epoch, via the level-0 counting function
    level0_index = family.counting(0, family.epochs[n])
    sign_levels = schedule.sign_index[level0_index]
    columns = [j1, j2]
    if phases is not None:
        v = np.asarray(phases)[level0_index]
        columns.append(np.repeat(v[:-1], 2))
    phase = PhasePath(xi, np.column_stack(columns))
    root = math.sqrt(lam)
    fluid1 = coupled.fluid
    # F2 moves by ±(F1 increment) on every interval; reusing F1's increments
    # keeps F2(χ_k) and the B* skeleton on the same arithmetic
    levels2 = signed_running(fluid1.levels, j2 * j1)
    return BivariateFlipFlopPath(
        lam=float(lam),
        phase=phase,
        fluid1=fluid1,
        fluid2=FluidPath(xi, levels2, root * j2.astype(float)),
        s_epochs=s_epochs,
        coupled=coupled,
        sign_levels=sign_levels,
    )


def level_rates(base: float, lambdas) -> tuple:
    """Rates of the nested family: ``base`` first, then every requested rate above it."""
    rates = [float(base)]
    for lam in sorted(set(float(x) for x in lambdas)):
        if lam < base * (1 - 1e-12):
            raise RateTooSmall(f"lambda_n = {lam} is below lambda_0 = {base}")
        if lam > rates[-1] * (1 + 1e-12):
            rates.append(lam)
    return tuple(rates)


def run_replication(base_rate: float, lambdas, s: RandomStream, b, a0, a1, sign_of, ell_of,
                    horizon: float | None, count: int | None, with_phase: bool):
    """Family, driver, schedule and one bivariate path per requested rate."""
    rates = level_rates(base_rate, lambdas)
    family = build_nested_family(rates, s.substream("family"), horizon=horizon, count=count)
    steps = len(family.epochs[0]) - 1
    driver = simulate_driver(b, a0, a1, steps, s.substream("driver"))
    schedule = build_schedule(family, driver, sign_of(driver), ell_of(driver))
    paths = {}
    for lam in lambdas:
        n = rates.index(min(rates, key=lambda r: abs(r - float(lam))))
        if n not in paths:
            if len(family.epochs[n]) < 2:
                raise IndexBeyondHorizon("no arrivals at this level within the horizon")
            coupled = wh_couple(rates[n], None, s.substream(f"flipflop-level-{n}"),
                                epochs=family.epochs[n])
            paths[n] = assemble_bivariate(rates[n], family, n, coupled, schedule,
                                          phases=driver.phase if with_phase else None)
    return family, schedule, {rates[n]: p for n, p in paths.items()}
