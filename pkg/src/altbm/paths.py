"""Immutable path objects: step-function phase paths, piecewise-linear
fluid paths and Brownian skeletons."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, OutOfHorizon


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PhasePath:
    """Right-continuous step function.

    ``times`` has one more entry than ``states``; ``states[i]`` holds on
    ``[times[i], times[i+1])`` and ``times[-1]`` is the horizon.  States are
    either scalars in {1, -1} or rows of integer labels, e.g. (J1, J2) or
    (J1, J2, u).
    """
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        states = _frozen(self.states, dtype=np.int64)
        if times.ndim != 1 or len(times) != len(states) + 1:
            raise InvalidInput("PhasePath needs len(times) == len(states) + 1")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise InvalidInput("PhasePath breakpoints must start at 0 and increase strictly")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self):
        return len(self.states)

    def state_at(self, t: float):
        if not 0 <= t <= self.horizon:
            raise OutOfHorizon(f"t={t} outside [0, {self.horizon}]")
        i = min(np.searchsorted(self.times, t, side="right") - 1, len(self.states) - 1)
        return self.states[i]

    def holding_times(self) -> np.ndarray:
        return np.diff(self.times)

    def project(self, coord: int) -> "PhasePath":
        if self.states.ndim != 2:
            raise InvalidInput("projection needs vector-valued states")
        return PhasePath(self.times, self.states[:, coord])


@dataclass(frozen=True, eq=False)
class FluidPath:
    """Continuous piecewise-linear path started at 0."""
    times: np.ndarray
    levels: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        times, levels, slopes = _frozen(self.times), _frozen(self.levels), _frozen(self.slopes)
        if not (len(times) == len(levels) == len(slopes) + 1):
            raise InvalidInput("FluidPath needs len(times) == len(levels) == len(slopes) + 1")
        if times[0] != 0.0 or levels[0] != 0.0:
            raise InvalidInput("FluidPath must start at time 0 with level 0")
        if np.any(np.diff(times) <= 0):
            raise InvalidInput("FluidPath breakpoints must increase strictly")
        predicted = levels[:-1] + slopes * np.diff(times)
        # breakpoint times carry rounding proportional to their magnitude
        tol = 1e-12 * (1.0 + np.abs(levels[1:]) + np.abs(slopes) * times[1:])
        if np.any(np.abs(predicted - levels[1:]) > tol):
            raise InvalidInput("FluidPath levels are not continuous with the slopes")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "slopes", slopes)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __call__(self, t):
        return eval_fluid(self, t)


@dataclass(frozen=True, eq=False)
class BrownianSkeleton:
    """B observed at Poisson epochs: ``values[k] = B(epochs[k])`` and
    ``minima[k]`` is the minimum of B between epochs k and k+1."""
    epochs: np.ndarray
    values: np.ndarray
    minima: np.ndarray

    def __post_init__(self):
        epochs, values, minima = _frozen(self.epochs), _frozen(self.values), _frozen(self.minima)
        if not (len(epochs) == len(values) == len(minima) + 1):
            raise InvalidInput("skeleton needs K+1 epochs/values and K minima")
        if epochs[0] != 0.0 or values[0] != 0.0:
            raise InvalidInput("skeleton must start at epoch 0 with value 0")
        if np.any(np.diff(epochs) <= 0):
            raise InvalidInput("skeleton epochs must increase strictly")
        if np.any(minima > np.minimum(values[:-1], values[1:])):
            raise InvalidInput("interval minimum exceeds an endpoint value")
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "minima", minima)

    @property
    def count(self) -> int:
        return len(self.minima)


def eval_fluid(p: FluidPath, t):
    """Linear interpolation; exact at breakpoints.  Accepts scalars or arrays."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > p.horizon):
        raise OutOfHorizon(f"query outside [0, {p.horizon}]")
    i = np.searchsorted(p.times, t_arr, side="right") - 1
    i = np.minimum(i, len(p.slopes) - 1)
    out = p.levels[i] + p.slopes[i] * (t_arr - p.times[i])
    exact = p.times[i] == t_arr
    out = np.where(exact, p.levels[i], out)
    return float(out) if out.ndim == 0 else out


def integrate_phase(j: PhasePath, scale: float, coord: int | None = None) -> FluidPath:
    """Fluid path with slope ``scale * state`` (or ``scale * state[coord]``)."""
    states = j.states if coord is None else j.states[:, coord]
    if states.ndim != 1:
        raise InvalidInput("pick a coordinate for vector-valued phase paths")
    slopes = scale * states.astype(float)
    levels = np.concatenate(([0.0], np.cumsum(slopes * np.diff(j.times))))
    return FluidPath(j.times, levels, slopes)


def phase_from_fluid(p: FluidPath, scale: float) -> PhasePath:
    return PhasePath(p.times, np.rint(p.slopes / scale).astype(np.int64))


def min_on_interval(p: FluidPath, a: float, b: float) -> float:
    """Exact minimum over [a, b]; attained at an endpoint or a breakpoint."""
    if not (0 <= a < b <= p.horizon):
        raise OutOfHorizon(f"[{a}, {b}] not inside [0, {p.horizon}]")
    lo = np.searchsorted(p.times, a, side="right")
    hi = np.searchsorted(p.times, b, side="left")
    inner = p.levels[lo:hi]
    ends = eval_fluid(p, np.array([a, b]))
    return float(min(ends.min(), inner.min()) if len(inner) else ends.min())


def interval_minima(p: FluidPath, knots) -> np.ndarray:
    """Minimum of ``p`` over each ``[knots[k], knots[k+1]]``, vectorized.

    Every knot must be a breakpoint of ``p`` (as the χ epochs of a flip-flop
    are), so each minimum is taken over the breakpoints it spans.
    """
    knots = np.asarray(knots, dtype=float)
    idx = np.searchsorted(p.times, knots)
    if np.any(idx >= len(p.times)) or np.any(p.times[idx] != knots):
        raise InvalidInput("interval_minima knots must be breakpoints of the path")
    if len(idx) < 2:
        return np.empty(0)
    inner = np.minimum.reduceat(p.levels[: idx[-1]], idx[:-1])
    return np.minimum(inner, p.levels[idx[1:]])
