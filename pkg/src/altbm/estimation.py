"""Statistical checks on the constructions.

Empirical generators are estimated from simulated phase paths; correlation
and point-mass targets use exact sampling of (B(t), B*(t)) with batch-means
errors; convergence sweeps track epoch misalignment across λ."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .errors import InvalidInput, NoObservations
from .exp_alt import ExpAltParams, simulate_exp_alternating
from .flipflop import coupling_diagnostics, wh_couple
from .map_alt import MapParams, simulate_map_alternating
from .sampling import RandomStream

BATCHES = 30


class UnderpoweredWarning(UserWarning):
    """Too few replications to expect a meaningful number of hits."""


@dataclass(frozen=True)
class EmpiricalGenerator:
    states: tuple
    counts: np.ndarray
    holding: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray

    @property
    def observed(self) -> np.ndarray:
        return self.holding > 0


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    replications: int

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr


def empirical_generator(paths, states) -> EmpiricalGenerator:
    """MLE Q̂_ij = N_ij / R_i from jump counts and holding times.

    Unobserved rows (R_i = 0) are left as NaN in ``estimate``.
    """
    states = tuple(tuple(s) if isinstance(s, (list, tuple, np.ndarray)) else s for s in states)
    lookup = {s: i for i, s in enumerate(states)}
    n = len(states)
    counts = np.zeros((n, n), dtype=np.int64)
    holding = np.zeros(n)
    seen = False
    for p in paths:
        if len(p) == 0:
            continue
        seen = True
        rows = p.states
        keys = map(tuple, rows.tolist()) if rows.ndim == 2 else rows.tolist()
        try:
            idx = np.fromiter((lookup[k] for k in keys), dtype=np.int64, count=len(rows))
        except KeyError as exc:
            raise InvalidInput(f"path visits undeclared state {exc.args[0]!r}") from None
        np.add.at(holding, idx, p.holding_times())
        src, dst = idx[:-1], idx[1:]
        moved = src != dst
        np.add.at(counts, (src[moved], dst[moved]), 1)
    if not seen or holding.sum() <= 0:
        raise NoObservations("no phase path with positive duration")
    with np.errstate(invalid="ignore", divide="ignore"):
        est = counts / holding[:, None]
        se = np.sqrt(counts) / holding[:, None]
        np.fill_diagonal(se, np.sqrt(counts.sum(axis=1)) / holding)
    est[holding == 0] = np.nan
    se[holding == 0] = np.nan
    np.fill_diagonal(est, 0.0)
    np.fill_diagonal(est, -est.sum(axis=1))
    return EmpiricalGenerator(states, counts, holding, est, se)


def batch_means(samples, batches: int = BATCHES) -> McEstimate:
    """Mean and batch-means standard error over contiguous batches."""
    x = np.asarray(samples, dtype=float)
    if len(x) < max(2, batches):
        raise InvalidInput(f"need at least {batches} samples for {batches} batches")
    usable = len(x) - len(x) % batches
    means = x[:usable].reshape(batches, -1).mean(axis=1)
    return McEstimate(float(x.mean()), float(means.std(ddof=1) / math.sqrt(batches)), len(x))


def _driver(driver):
    if isinstance(driver, ExpAltParams):
        return driver.as_map(), driver.parity_offset
    if isinstance(driver, MapParams):
        return driver, 0
    raise InvalidInput(f"unsupported driver {type(driver).__name__}")


def occupation_times(driver, t: float, replications: int, s: RandomStream):
    """Time spent synchronised / mirrored on [0, t] and the arrival count,
    per replication, from exact simulation of the driver's jumps."""
    m, offset = _driver(driver)
    if not t > 0:
        raise InvalidInput(f"t must be positive, got {t}")
    n = m.size
    exit_rate = -np.diag(m.C)
    hidden = m.C - np.diag(np.diag(m.C))
    table = np.cumsum(np.hstack((hidden, m.D)) / exit_rate[:, None], axis=1)
    u = s.uniform(replications)
    state = np.minimum(np.searchsorted(np.cumsum(m.b), u * m.b.sum(), side="right"), n - 1)
    parity = np.full(replications, offset, dtype=np.int64)
    arrivals = np.zeros(replications, dtype=np.int64)
    clock = np.zeros(replications)
    occupied = np.zeros((2, replications))
    active = np.arange(replications)
    while len(active):
        st = state[active]
        sojourn = -np.log(s.uniform(len(active))) / exit_rate[st]
        end = np.minimum(clock[active] + sojourn, t)
        np.add.at(occupied, (parity[active], active), end - clock[active])
        clock[active] = end
        active = active[end < t]
        if not len(active):
            break
        rows = table[state[active]]
        draw = s.uniform(len(active))[:, None] * rows[:, -1:]
        pick = np.minimum((rows <= draw).sum(axis=1), 2 * n - 1)
        arrived = pick >= n
        state[active] = np.where(arrived, pick - n, pick)
        parity[active] ^= arrived.astype(np.int64)
        arrivals[active] += arrived
    return occupied[0], occupied[1], arrivals


def exact_alt_bm_sample(driver, t: float, s: RandomStream, replications: int | None = None):
    """(B(t), B*(t)) exact in law.

    Given the synchronised time T+ and mirrored time T-, B is the sum of
    independent N(0, T+) and N(0, T-) parts and B* the difference; this is
    the per-sojourn Gaussian sum collapsed by sojourn type.
    """
    single = replications is None
    reps = 1 if single else int(replications)
    plus, minus, _ = occupation_times(driver, t, reps, s.substream("driver"))
    g = s.substream("gauss")
    z_plus = np.sqrt(plus) * g.normal(size=reps)
    z_minus = np.sqrt(minus) * g.normal(size=reps)
    b, bstar = z_plus + z_minus, z_plus - z_minus
    if single:
        return float(b[0]), float(bstar[0])
    return b, bstar


def mc_correlation(driver, t: float, replications: int, s: RandomStream) -> McEstimate:
    """Sample mean of B(t) B*(t) / t with a 30-batch standard error."""
    if replications < 1000:
        raise InvalidInput("mc_correlation needs at least 1000 replications")
    b, bstar = exact_alt_bm_sample(driver, t, s, replications)
    return batch_means(b * bstar / t)


def sync_point_mass(alpha: float, t: float, replications: int, s: RandomStream,
                    beta: float = 1.0) -> McEstimate:
    """Fraction of replications with B(t) - B*(t) exactly 0, i.e. no
    desynchronisation on [0, t]; the target is exp(-alpha t)."""
    if replications < 1000:
        raise InvalidInput("sync_point_mass needs at least 1000 replications")
    if t == 0:
        return McEstimate(1.0, 0.0, replications)
    expected_hits = math.exp(-alpha * t) * replications
    if expected_hits < 50:
        warnings.warn(
            f"only {expected_hits:.1f} expected hits; use at least "
            f"{math.ceil(50 * math.exp(alpha * t)):,} replications", UnderpoweredWarning)
    b, bstar = exact_alt_bm_sample(ExpAltParams(alpha, beta), t, s, replications)
    hits = (b - bstar) == 0.0
    p = float(hits.mean())
    return McEstimate(p, math.sqrt(max(p * (1 - p), 1e-300) / replications), replications)


def _level_diagnostics(path, horizon):
    pair = path.coupled
    d = coupling_diagnostics(pair, horizon)
    f2 = path.fluid2.levels[0::2]
    d["bstar_residual"] = float(np.max(np.abs(f2 - path.bstar_skeleton())))
    return d


def sweep_replication(construction: str, lambdas, horizon: float, s: RandomStream, params=None):
    """Misalignment and worst identity residual per λ for one replication."""
    lambdas = [float(x) for x in lambdas]
    mis = np.zeros(len(lambdas))
    resid = np.zeros(len(lambdas))
    if construction == "standard":
        for i, lam in enumerate(lambdas):
            pair = wh_couple(lam, None, s.substream(f"lambda-{i}"), horizon=horizon)
            d = coupling_diagnostics(pair, horizon)
            mis[i] = d["misalignment"]
            resid[i] = max(d["value_residual"], d["minimum_residual"])
        return mis, resid
    if construction == "exp-alt":
        _, _, paths = simulate_exp_alternating(params, lambdas, s, horizon=horizon)
    elif construction == "map-alt":
        _, _, paths = simulate_map_alternating(params, lambdas, s, horizon=horizon)
    else:
        raise InvalidInput(f"unknown construction {construction!r}")
    for i, lam in enumerate(lambdas):
        d = _level_diagnostics(paths[lam], horizon)
        mis[i] = d["misalignment"]
        resid[i] = max(d["value_residual"], d["minimum_residual"], d["bstar_residual"])
    return mis, resid


def summarize_sweep(lambdas, mis, resid) -> dict:
    """Per-λ rows and the log-log slope of the median misalignment with a
    95% interval; ``mis`` and ``resid`` are (len(lambdas), replications)."""
    mis = np.asarray(mis, dtype=float)
    resid = np.asarray(resid, dtype=float)
    medians = np.median(mis, axis=1)
    rows = [
        {
            "lambda": lam,
            "median_misalignment": float(medians[i]),
            "p90_misalignment": float(np.quantile(mis[i], 0.9)),
            "max_identity_residual": float(resid[i].max()),
        }
        for i, lam in enumerate(lambdas)
    ]
    slope = slope_lo = slope_hi = float("nan")
    if len(lambdas) >= 3 and np.all(medians > 0):
        fit = scipy.stats.linregress(np.log(lambdas), np.log(medians))
        half = scipy.stats.t.ppf(0.975, len(lambdas) - 2) * fit.stderr
        slope, slope_lo, slope_hi = fit.slope, fit.slope - half, fit.slope + half
    return {"rows": rows, "slope": float(slope), "slope_ci": (float(slope_lo), float(slope_hi)),
            "misalignment": mis}


def check_sweep_lambdas(lambdas):
    lambdas = [float(x) for x in lambdas]
    if not lambdas or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise InvalidInput("lambdas must be nonempty and strictly increasing")
    return lambdas


def convergence_sweep(construction: str, lambdas, horizon: float, replications: int,
                      s: RandomStream, params=None) -> dict:
    """Epoch misalignment on [0, horizon] and identity residuals across λ.

    ``construction`` is ``standard`` (independent flip-flop per λ),
    ``exp-alt`` or ``map-alt`` (one nested family per replication, all λ
    levels on the same family).  Replication r uses substream
    ``replication-r``.  No theoretical slope is asserted.
    """
    lambdas = check_sweep_lambdas(lambdas)
    mis = np.zeros((len(lambdas), replications))
    resid = np.zeros((len(lambdas), replications))
    for r in range(replications):
        mis[:, r], resid[:, r] = sweep_replication(
            construction, lambdas, horizon, s.substream(f"replication-{r}"), params)
    return summarize_sweep(lambdas, mis, resid)


__all__ = [
    "EmpiricalGenerator", "McEstimate", "UnderpoweredWarning", "empirical_generator", "batch_means",
    "occupation_times", "exact_alt_bm_sample", "mc_correlation", "sync_point_mass",
    "sweep_replication", "summarize_sweep", "convergence_sweep",
]
