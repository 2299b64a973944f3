"""Per-run regret, regret decomposition, fairness regret and exposure-slack accounting.

Regret is measured per run against the policy-expected reward
``sum_t R_{g_t}^t`` (with ``R_g^t = sum_i pi_g^t(i) mu_i``) rather than the
sampled rewards. With that choice the two-term decomposition is an exact
algebraic identity for every run, so it can be checked to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import BanditInstance
from .oracle import OracleSummary
from .policies import FairnessConfig, LearnerState, StepDecision

# running-minimum seed before the first round
NO_SLACK_YET = np.iinfo(np.int64).max


@dataclass
class MetricsAccumulator:
    group_means: list[np.ndarray]
    beta: FairnessConfig
    cum_reward_realized: float = 0.0
    cum_expected_reward: float = 0.0
    term2: float = 0.0
    fr: np.ndarray = field(default=None)
    min_gef_slack: np.ndarray = field(default=None)
    group_pulls: np.ndarray = field(default=None)
    arm_pulls: np.ndarray = field(default=None)
    t: int = 0

    @classmethod
    def create(cls, instance: BanditInstance, beta: FairnessConfig) -> "MetricsAccumulator":
        m = instance.m
        return cls(
            [instance.group_means(g) for g in range(m)],
            beta,
            fr=np.zeros(m),
            min_gef_slack=np.full(m, NO_SLACK_YET, dtype=np.int64),
            group_pulls=np.zeros(m, dtype=np.int64),
            arm_pulls=np.zeros(instance.n, dtype=np.int64),
        )


def record_step(
    acc: MetricsAccumulator,
    decision: StepDecision,
    reward: float,
    oracle: OracleSummary,
    state: LearnerState,
) -> MetricsAccumulator:
    g = decision.group
    pi = decision.policy
    r_t = float(np.dot(pi, acc.group_means[g]))
    acc.cum_reward_realized += reward
    acc.cum_expected_reward += r_t
    acc.term2 += oracle.r_star[g] - r_t
    acc.fr[g] += float(np.abs(pi - oracle.pi_star[g]).sum())
    acc.t = state.t
    acc.group_pulls[:] = state.group_counts
    acc.arm_pulls[:] = state.counts
    for h in range(len(acc.fr)):
        slack = int(state.group_counts[h]) - acc.beta.floor(h, state.t)
        if slack < acc.min_gef_slack[h]:
            acc.min_gef_slack[h] = slack
    return acc


def pseudo_regret(acc: MetricsAccumulator, oracle: OracleSummary, T: int | None = None) -> float:
    T = acc.t if T is None else T
    return oracle.optimal_reward_at(T) - acc.cum_expected_reward


def term1(oracle: OracleSummary, beta: FairnessConfig, group_pulls, T: int) -> float:
    return float(sum((int(n) - beta.floor(g, T)) * d for g, (n, d) in enumerate(zip(group_pulls, oracle.delta_g))))


def decomposition_check(acc: MetricsAccumulator, oracle: OracleSummary, T: int | None = None, group_pulls=None):
    """Return ``(term1, term2, residual)`` with residual = regret - term1 - term2."""
    T = acc.t if T is None else T
    group_pulls = acc.group_pulls if group_pulls is None else group_pulls
    t1 = term1(oracle, acc.beta, group_pulls, T)
    return t1, acc.term2, pseudo_regret(acc, oracle, T) - t1 - acc.term2


@dataclass(frozen=True)
class GroupFairness:
    normalized_fr: float | None
    min_gef_slack: int
    group_pulls: int
    arm_pulls: tuple[int, ...]


def fairness_report(acc: MetricsAccumulator, instance: BanditInstance) -> list[GroupFairness]:
    out = []
    for g, arms in enumerate(instance.partition.groups):
        n_g = int(acc.group_pulls[g])
        out.append(
            GroupFairness(
                acc.fr[g] / n_g if n_g else None,
                int(acc.min_gef_slack[g]),
                n_g,
                tuple(int(acc.arm_pulls[a]) for a in arms),
            )
        )
    return out
