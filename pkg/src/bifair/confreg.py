"""Per-arm confidence regions and the optimistic group-value optimizer.

The numba kernels here are shared by the step-by-step policy API and the
compiled simulation loop, so both paths make bit-identical decisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .merit import IDENTITY, MeritSpec, merit_eval, merit_value

DEFAULT_GRID = 33
DEFAULT_SWEEPS = 20
DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class OptimizerSettings:
    grid: int = DEFAULT_GRID
    sweeps: int = DEFAULT_SWEEPS
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError("optimizer grid needs at least 2 points per interval")
        if self.sweeps < 1:
            raise ValueError("optimizer needs at least one sweep")
        if not self.tol >= 0:
            raise ValueError("optimizer tolerance must be non-negative")


@numba.njit(cache=True)
def group_width(n_group, k, delta):
    return math.sqrt(2.0 * math.log(4.0 * n_group * k / delta))


@numba.njit(cache=True)
def fill_region(counts, sums, n_group, delta, dlo, dhi, lo_out, hi_out):
    """Write clipped interval ends for one group; returns the group width scale."""
    k = counts.shape[0]
    wg = group_width(n_group, k, delta)
    for i in range(k):
        mu_hat = sums[i] / counts[i]
        w = wg / math.sqrt(counts[i])
        lo = mu_hat - w
        hi = mu_hat + w
        if lo < dlo:
            lo = dlo
        elif lo > dhi:
            lo = dhi
        if hi > dhi:
            hi = dhi
        elif hi < dlo:
            hi = dlo
        lo_out[i] = lo
        hi_out[i] = hi
    return wg


@numba.njit(cache=True)
def box_value(mu, kind, a, b, p):
    num = 0.0
    den = 0.0
    for i in range(mu.shape[0]):
        f = merit_eval(kind, a, b, p, mu[i])
        num += f * mu[i]
        den += f
    return num / den


@numba.njit(cache=True)
def optimize_box(lo, hi, kind, a, b, p, grid, sweeps, tol, maximize, mu_out):
    """Maximise (or minimise) the merit-weighted group value over a box.

    Identity merit with every lower end >= 0.5 makes the objective
    coordinate-wise non-decreasing, so the corner is exact. Otherwise runs
    coordinate ascent over ``grid`` evenly spaced points per interval, started
    at the favourable corner; a coordinate moves only on improvement > tol,
    and ties go to the larger (maximise) or smaller (minimise) value.
    Returns the objective at ``mu_out``.
    """
    k = lo.shape[0]
    corner_ok = kind == IDENTITY
    for i in range(k):
        if lo[i] < 0.5:
            corner_ok = False
        mu_out[i] = hi[i] if maximize else lo[i]
    if corner_ok:
        return box_value(mu_out, kind, a, b, p)

    num = 0.0
    den = 0.0
    for i in range(k):
        f = merit_eval(kind, a, b, p, mu_out[i])
        num += f * mu_out[i]
        den += f
    val = num / den
    for _ in range(sweeps):
        moved = False
        for i in range(k):
            fi = merit_eval(kind, a, b, p, mu_out[i])
            rest_num = num - fi * mu_out[i]
            rest_den = den - fi
            span = hi[i] - lo[i]
            best_v = mu_out[i]
            best = val
            first = True
            for jj in range(grid):
                # scan order makes the first strict winner the tie-break winner
                j = grid - 1 - jj if maximize else jj
                if j == grid - 1:
                    v = hi[i]
                elif j == 0:
                    v = lo[i]
                else:
                    v = lo[i] + span * j / (grid - 1)
                fv = merit_eval(kind, a, b, p, v)
                cand = (rest_num + fv * v) / (rest_den + fv)
                if first or (maximize and cand > best) or ((not maximize) and cand < best):
                    best = cand
                    best_v = v
                    first = False
            improved = best > val + tol if maximize else best < val - tol
            if improved and best_v != mu_out[i]:
                mu_out[i] = best_v
                num = 0.0
                den = 0.0
                for q in range(k):
                    f = merit_eval(kind, a, b, p, mu_out[q])
                    num += f * mu_out[q]
                    den += f
                val = num / den
                moved = True
        if not moved:
            break
    return box_value(mu_out, kind, a, b, p)


@numba.njit(cache=True)
def merit_policy(mu, kind, a, b, p, pi_out):
    """``pi_i = f(mu_i) / sum_j f(mu_j)``."""
    den = 0.0
    for i in range(mu.shape[0]):
        f = merit_eval(kind, a, b, p, mu[i])
        pi_out[i] = f
        den += f
    for i in range(mu.shape[0]):
        pi_out[i] = pi_out[i] / den


@numba.njit(cache=True)
def inverse_cdf(pi, u):
    """Index of the first cumulative mass exceeding ``u`` (last index on round-off)."""
    acc = 0.0
    k = pi.shape[0]
    for i in range(k):
        acc += pi[i]
        if u < acc:
            return i
    return k - 1


@dataclass(frozen=True)
class ConfidenceRegion:
    mu_hat: np.ndarray
    width: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    group_width: float
    n_group: int
    k: int
    delta: float


@dataclass(frozen=True)
class OptimisticEstimate:
    mu_tilde: np.ndarray
    pi: np.ndarray
    value: float


def build_region(counts, sums, n_group: int, k: int, delta: float, domain=(1e-3, 1.0)) -> ConfidenceRegion:
    counts = np.asarray(counts, dtype=np.float64)
    sums = np.asarray(sums, dtype=np.float64)
    if counts.shape != sums.shape or counts.ndim != 1 or counts.size != k:
        raise ValueError("counts and sums must be 1-d arrays of length k")
    if np.any(counts < 1):
        raise ValueError("every arm needs at least one pull before its region exists")
    if n_group < k:
        raise ValueError(f"group count {n_group} below group size {k}")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    lo = np.empty(k)
    hi = np.empty(k)
    wg = fill_region(counts, sums, float(n_group), float(delta), float(domain[0]), float(domain[1]), lo, hi)
    return ConfidenceRegion(sums / counts, wg / np.sqrt(counts), lo, hi, float(wg), int(n_group), int(k), float(delta))


def group_value(mu, merit: MeritSpec) -> float:
    mu = np.asarray(mu, dtype=np.float64)
    if mu.size == 0:
        raise ValueError("group value of an empty group")
    f = merit_value(merit, mu)
    return float(np.sum(f * mu) / np.sum(f))


def _solve(region: ConfidenceRegion, merit: MeritSpec, settings: OptimizerSettings, maximize: bool) -> np.ndarray:
    kind, a, b, p = merit.params
    mu = np.empty(region.k)
    optimize_box(region.lo, region.hi, kind, a, b, p, settings.grid, settings.sweeps, settings.tol, maximize, mu)
    return mu


def optimistic_means(region: ConfidenceRegion, merit: MeritSpec, settings: OptimizerSettings | None = None) -> OptimisticEstimate:
    mu = _solve(region, merit, settings or OptimizerSettings(), True)
    kind, a, b, p = merit.params
    pi = np.empty(region.k)
    merit_policy(mu, kind, a, b, p, pi)
    return OptimisticEstimate(mu, pi, box_value(mu, kind, a, b, p))


def pessimistic_means(region: ConfidenceRegion, merit: MeritSpec, settings: OptimizerSettings | None = None) -> np.ndarray:
    return _solve(region, merit, settings or OptimizerSettings(), False)
