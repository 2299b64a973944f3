"""Ground truth from known means: optimal fair policy, optimal reward, gaps and the regret bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .env import BanditInstance
from .merit import MeritSpec, merit_bounds, merit_value
from .policies import FairnessConfig


class NoSuboptimalGroupError(ValueError):
    """Raised when every group ties with the optimum, so the gap is zero."""


def optimal_policy(mu_g, merit: MeritSpec) -> np.ndarray:
    f = merit_value(merit, np.asarray(mu_g, dtype=np.float64))
    f = np.atleast_1d(f)
    return f / f.sum()


def optimal_group(instance: BanditInstance, merit: MeritSpec) -> tuple[int, list[float], bool]:
    """Return ``(g_star, per-group optimal rewards, unique)``; ties go to the lowest index.

    Merits are taken at means clipped into the merit domain; rewards use the
    true means.
    """
    values = []
    for g in range(instance.m):
        mu = instance.group_means(g)
        values.append(float(np.dot(optimal_policy(np.clip(mu, merit.lo, merit.hi), merit), mu)))
    best = max(values)
    g_star = values.index(best)
    unique = values.count(best) == 1
    return g_star, values, unique


def optimal_allocation(g_star: int, beta: FairnessConfig, T: int) -> list[int]:
    """Group pull counts of the optimal fair policy over ``T`` rounds.

    Sub-optimal groups sit exactly at their exposure floor; every other round
    goes to ``g_star``.
    """
    alloc = beta.floors(T)
    alloc[g_star] = T - sum(alloc) + alloc[g_star]
    return alloc


def optimal_reward(r_star, g_star: int, beta: FairnessConfig, T: int) -> float:
    """Reward of the optimal fair policy over ``T`` rounds.

    Pull counts are exact integers and the weighted sum is formed over the
    rationals, so the only rounding is the final conversion to float.
    """
    if len(r_star) == 1:
        return float(T * Fraction(float(r_star[0])))
    alloc = optimal_allocation(g_star, beta, T)
    return float(sum(n * Fraction(float(r)) for n, r in zip(alloc, r_star)))


@dataclass(frozen=True)
class OracleSummary:
    pi_star: tuple[np.ndarray, ...]
    r_star: tuple[float, ...]
    g_star: int
    g_star_unique: bool
    delta_g: tuple[float, ...]
    delta_min: float | None
    horizon: int
    r_beta_star: float
    beta: FairnessConfig

    def optimal_reward_at(self, t: int) -> float:
        return optimal_reward(self.r_star, self.g_star, self.beta, t)

    def to_dict(self) -> dict:
        return {
            "pi_star": [[float(x) for x in p] for p in self.pi_star],
            "R_star_g": [float(r) for r in self.r_star],
            "g_star": self.g_star,
            "g_star_unique": self.g_star_unique,
            "Delta_g": [float(d) for d in self.delta_g],
            "Delta_min": None if self.delta_min is None else float(self.delta_min),
            "T": self.horizon,
            "R_beta_star_T": float(self.r_beta_star),
            "beta": self.beta.as_strings(),
        }


def summarize(instance: BanditInstance, merit: MeritSpec, beta: FairnessConfig, T: int) -> OracleSummary:
    g_star, r_star, unique = optimal_group(instance, merit)
    pis = tuple(optimal_policy(np.clip(instance.group_means(g), merit.lo, merit.hi), merit) for g in range(instance.m))
    gaps = tuple(r_star[g_star] - r for r in r_star)
    positive = [d for d in gaps if d > 0]
    return OracleSummary(
        pi_star=pis,
        r_star=tuple(r_star),
        g_star=g_star,
        g_star_unique=unique,
        delta_g=gaps,
        delta_min=min(positive) if positive else None,
        horizon=T,
        r_beta_star=optimal_reward(r_star, g_star, beta, T),
        beta=beta,
    )


@dataclass(frozen=True)
class BoundParameters:
    L1: float
    gamma1: float
    gamma2: float
    delta_g: tuple[float, ...]
    delta_min: float | None
    group_sizes: tuple[int, ...]
    beta: tuple[float, ...]
    delta: float

    @classmethod
    def from_oracle(cls, summary: OracleSummary, merit: MeritSpec, instance: BanditInstance, delta: float, L1=None):
        g1, g2, _ = merit_bounds(merit)
        return cls(
            L1=estimate_L1(merit, instance) if L1 is None else L1,
            gamma1=g1,
            gamma2=g2,
            delta_g=summary.delta_g,
            delta_min=summary.delta_min,
            group_sizes=instance.partition.sizes,
            beta=tuple(float(b) for b in summary.beta.beta),
            delta=delta,
        )


def bound_terms(params: BoundParameters, group_pulls, T: int) -> dict[str, float]:
    """Components of the high-probability regret bound, evaluated at realised group pulls.

    The per-group excess-pull bracket is floored at zero.
    """
    if not params.delta_min:
        raise NoSuboptimalGroupError("no sub-optimal group: Δ_min is 0, the bound is undefined")
    d = params.delta
    const = (1.0 + math.pi**2 / 3.0) * sum(params.delta_g)
    sqrt_term = sum(math.sqrt(n * k) for n, k in zip(group_pulls, params.group_sizes)) * (1.0 - d)
    excess = 0.0
    for n, k, b, gap in zip(group_pulls, params.group_sizes, params.beta, params.delta_g):
        log_part = 8.0 * params.L1**2 / params.delta_min**2 * math.log(4.0 * n * k / d)
        dev_part = math.sqrt(n * math.log(k / d) / 2.0)
        bracket = k * params.gamma2 / params.gamma1 * (log_part + dev_part) - b * T
        excess += max(bracket, 0.0) * gap
    return {"constant": const, "sqrt": sqrt_term, "delta_T": d * T, "excess_pulls": excess}


def theoretical_bound(params: BoundParameters, group_pulls, T: int) -> float:
    return sum(bound_terms(params, group_pulls, T).values())


def estimate_L1(
    merit: MeritSpec,
    instance: BanditInstance,
    samples: int = 10_000,
    seed: int = 0,
    max_step: float = 0.05,
    safety: float = 1.5,
) -> float:
    """Sampled Lipschitz constant of the group-value map, inflated by ``safety``.

    Each sample picks a group, a random mean vector in the merit domain and one
    coordinate, then moves that coordinate by a non-zero step. Draws are
    sequential, so a larger budget only adds samples and never lowers the max.
    """
    gen = np.random.default_rng(seed)
    lo, hi = merit.lo, merit.hi
    kind = merit.kind
    sizes = instance.partition.sizes
    best = 0.0
    for _ in range(samples):
        g = int(gen.integers(len(sizes)))
        mu = lo + (hi - lo) * gen.random(sizes[g])
        i = int(gen.integers(sizes[g]))
        step = max_step * (2.0 * gen.random() - 1.0)
        moved = min(max(mu[i] + step, lo), hi)
        if moved == mu[i]:
            continue
        mu2 = mu.copy()
        mu2[i] = moved
        ratio = abs(_value(mu2, merit, kind) - _value(mu, merit, kind)) / abs(moved - mu[i])
        best = max(best, ratio)
    return float(safety * best)


def _value(mu, merit, kind):
    if kind == "identity":
        f = mu
    elif kind == "affine":
        f = merit.a * mu + merit.b
    else:
        f = mu**merit.p
    return float(np.dot(f, mu) / f.sum())
