"""BF-UCB and the UCB1 / MF / GEF baselines as single-step decision rules.

Each ``*_select`` reads a :class:`LearnerState`, draws exactly one policy
uniform from ``rng`` (whether or not it needs it, so streams stay aligned
across algorithms) and returns a :class:`StepDecision`. ``update`` folds the
observed reward back into the state. The compiled simulation loop in
``bifair._kernel`` makes the same decisions; tests replay one against the
other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numba
import numpy as np

from .confreg import OptimizerSettings, build_region, inverse_cdf, optimistic_means
from .env import ConfigError, GroupPartition, RngStream
from .merit import MeritSpec

ALGORITHMS = ("bf_ucb", "ucb1", "mf_ucb", "gef_ucb")


def parse_fraction(value) -> Fraction:
    """Exact rational from ``"p/q"``, a decimal string, an int or a float.

    Floats go through their shortest repr, so ``0.4`` becomes ``2/5``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ConfigError(f"not a number: {value!r}")
    if isinstance(value, float):
        value = repr(value)
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot read {value!r} as a rational number") from exc


@dataclass(frozen=True)
class FairnessConfig:
    beta: tuple[Fraction, ...]

    @classmethod
    def parse(cls, values: Sequence) -> "FairnessConfig":
        return cls(tuple(parse_fraction(v) for v in values))

    @property
    def m(self) -> int:
        return len(self.beta)

    def problems(self, m: int | None = None) -> list[str]:
        m = self.m if m is None else m
        errs = []
        if len(self.beta) != m:
            errs.append(f"β has {len(self.beta)} entries for {m} groups")
            return errs
        cap = Fraction(1, m)
        for g, b in enumerate(self.beta):
            if b <= 0:
                errs.append(f"β_{g + 1} = {b} must be > 0")
            elif b > cap:
                errs.append(f"β_{g + 1} > 1/m ({b} > {cap})")
        total = sum(self.beta, Fraction(0))
        if total >= 1:
            errs.append(f"Σβ = {total} must be < 1")
        return errs

    def validate(self, m: int) -> "FairnessConfig":
        errs = self.problems(m)
        if errs:
            raise ConfigError("; ".join(errs))
        return self

    def floor(self, g: int, t: int) -> int:
        b = self.beta[g]
        return (b.numerator * t) // b.denominator

    def floors(self, t: int) -> list[int]:
        return [self.floor(g, t) for g in range(self.m)]

    def common_denominator(self) -> tuple[np.ndarray, int]:
        """Integer numerators ``a_g`` and ``D`` with ``beta_g = a_g / D``."""
        den = 1
        for b in self.beta:
            den = den * b.denominator // math.gcd(den, b.denominator)
        nums = np.array([b.numerator * (den // b.denominator) for b in self.beta], dtype=np.int64)
        return nums, den

    def as_strings(self) -> list[str]:
        return [str(b) for b in self.beta]


@dataclass
class LearnerState:
    partition: GroupPartition
    counts: np.ndarray = field(init=False)
    sums: np.ndarray = field(init=False)
    group_counts: np.ndarray = field(init=False)
    t: int = 0

    def __post_init__(self):
        self.counts = np.zeros(self.partition.n, dtype=np.int64)
        self.sums = np.zeros(self.partition.n, dtype=np.float64)
        self.group_counts = np.zeros(self.partition.m, dtype=np.int64)
        self._arms = [np.asarray(g, dtype=np.int64) for g in self.partition.groups]
        self._owner = self.partition.group_of()

    @property
    def t_init(self) -> int:
        return self.partition.m * max(self.partition.sizes)

    @property
    def in_init(self) -> bool:
        return self.t < self.t_init

    @property
    def phase(self) -> str:
        return "init" if self.in_init else "main"

    def arms(self, g: int) -> np.ndarray:
        return self._arms[g]

    def owner(self, arm: int) -> int:
        return int(self._owner[arm])

    def check(self) -> None:
        assert self.counts.sum() == self.t
        assert self.group_counts.sum() == self.t
        for g in range(self.partition.m):
            assert self.group_counts[g] == self.counts[self._arms[g]].sum()
        if not self.in_init:
            assert np.all(self.counts >= 1)


@dataclass(frozen=True)
class StepDecision:
    group: int
    arm: int
    policy: np.ndarray  # within-group distribution, group-local order
    ufg_triggered: bool = False


def _point_mass(k: int, local: int) -> np.ndarray:
    pi = np.zeros(k)
    pi[local] = 1.0
    return pi


@numba.njit(cache=True)
def ucb_argmax(counts, sums, log_t):
    """Lowest index maximising ``mean + sqrt(2 ln t / N)``."""
    best = -1.0
    arg = 0
    for i in range(counts.shape[0]):
        idx = sums[i] / counts[i] + math.sqrt(2.0 * log_t / counts[i])
        if i == 0 or idx > best:
            best = idx
            arg = i
    return arg


def _optimistic_for_group(state: LearnerState, g: int, merit: MeritSpec, delta: float, settings):
    arms = state.arms(g)
    region = build_region(state.counts[arms], state.sums[arms], int(state.group_counts[g]), arms.size, delta, merit.domain)
    return optimistic_means(region, merit, settings)


def exposure_select(
    state: LearnerState,
    g: int,
    merit: MeritSpec,
    delta: float,
    rng: RngStream,
    settings: OptimizerSettings | None = None,
    ufg_triggered: bool = False,
    u: float | None = None,
) -> StepDecision:
    if u is None:
        u = rng.uniform()
    arms = state.arms(g)
    if np.any(state.counts[arms] < 1):
        raise RuntimeError(f"exposure on group {g} before every arm was pulled once")
    est = _optimistic_for_group(state, g, merit, delta, settings)
    local = inverse_cdf(est.pi, u)
    return StepDecision(g, int(arms[local]), est.pi, ufg_triggered)


def learn_select(state: LearnerState, merit: MeritSpec, delta: float, settings: OptimizerSettings | None = None) -> int:
    best, arg = -math.inf, 0
    for g in range(state.partition.m):
        v = _optimistic_for_group(state, g, merit, delta, settings).value
        if v > best:
            best, arg = v, g
    return arg


def ufg_group(state: LearnerState, beta: FairnessConfig) -> int | None:
    """Group furthest behind its exposure floor, or ``None`` if none is behind."""
    nums, den = beta.common_denominator()
    # beta_g * t - N_g scaled by the common denominator: exact integers
    slack = nums * state.t - den * state.group_counts
    if np.all(slack <= 0):
        return None
    return int(np.argmax(slack))


def group_stage(state, beta, merit, delta, settings=None) -> tuple[int, bool]:
    g = ufg_group(state, beta)
    if g is not None:
        return g, True
    return learn_select(state, merit, delta, settings), False


def _ucb_within(state: LearnerState, g: int) -> StepDecision:
    arms = state.arms(g)
    local = ucb_argmax(state.counts[arms], state.sums[arms], math.log(state.t))
    return StepDecision(g, int(arms[local]), _point_mass(arms.size, local))


def _init_step(state: LearnerState) -> tuple[int, StepDecision | None]:
    g = state.t % state.partition.m
    arms = state.arms(g)
    unpulled = np.flatnonzero(state.counts[arms] == 0)
    if unpulled.size:
        local = int(unpulled[0])
        return g, StepDecision(g, int(arms[local]), _point_mass(arms.size, local))
    return g, None


def bf_select(state, beta, merit, delta, rng, settings=None) -> StepDecision:
    u = rng.uniform()
    if state.in_init:
        g, dec = _init_step(state)
        return dec or exposure_select(state, g, merit, delta, rng, settings, u=u)
    g, forced = group_stage(state, beta, merit, delta, settings)
    return exposure_select(state, g, merit, delta, rng, settings, forced, u=u)


def gef_select(state, beta, rng, merit=None, delta=0.01, settings=None) -> StepDecision:
    rng.uniform()
    if state.in_init:
        g, dec = _init_step(state)
        return dec or _ucb_within(state, g)
    merit = merit or MeritSpec.identity()
    g, forced = group_stage(state, beta, merit, delta, settings)
    d = _ucb_within(state, g)
    return StepDecision(d.group, d.arm, d.policy, forced)


def ucb1_select(state: LearnerState, rng: RngStream | None = None) -> StepDecision:
    if rng is not None:
        rng.uniform()
    if state.in_init:
        g, dec = _init_step(state)
        return dec or _ucb_within(state, g)
    arm = ucb_argmax(state.counts, state.sums, math.log(state.t))
    g = state.owner(arm)
    local = int(np.flatnonzero(state.arms(g) == arm)[0])
    return StepDecision(g, int(arm), _point_mass(state.arms(g).size, local))


def mf_policy(state: LearnerState, merit: MeritSpec, delta: float, settings=None) -> np.ndarray:
    """Merit policy over all arms treated as one group with ``N = t``."""
    n = state.partition.n
    region = build_region(state.counts, state.sums, state.t, n, delta, merit.domain)
    return optimistic_means(region, merit, settings).pi


def mf_select(state, merit, delta, rng, settings=None) -> StepDecision:
    u = rng.uniform()
    if state.in_init:
        g, dec = _init_step(state)
        return dec or exposure_select(state, g, merit, delta, rng, settings, u=u)
    pi = mf_policy(state, merit, delta, settings)
    arm = int(inverse_cdf(pi, u))
    g = state.owner(arm)
    within = pi[state.arms(g)]
    return StepDecision(g, arm, within / within.sum())


def select(algorithm, state, beta, merit, delta, rng, settings=None) -> StepDecision:
    if algorithm == "bf_ucb":
        return bf_select(state, beta, merit, delta, rng, settings)
    if algorithm == "ucb1":
        return ucb1_select(state, rng)
    if algorithm == "mf_ucb":
        return mf_select(state, merit, delta, rng, settings)
    if algorithm == "gef_ucb":
        return gef_select(state, beta, rng, merit, delta, settings)
    raise ConfigError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def update(state: LearnerState, decision: StepDecision, reward: float) -> LearnerState:
    arm = decision.arm
    state.counts[arm] += 1
    state.sums[arm] += reward
    state.group_counts[decision.group] += 1
    state.t += 1
    return state
