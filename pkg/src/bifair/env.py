"""Bandit instances, group partitions and seeded random streams."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BERNOULLI = "bernoulli"
UNIFORM_BAND = "uniform_band"

# Purpose tags mixed into stream ids. Values are part of the reproducibility
# contract: changing them changes every simulated trajectory.
PURPOSE_INSTANCE = 0
PURPOSE_REWARD = 1
PURPOSE_POLICY = 2
PURPOSE_FIXED_INSTANCE = 3

ALGORITHM_CODES = {"bf_ucb": 0, "ucb1": 1, "mf_ucb": 2, "gef_ucb": 3}
# Stream slot used for draws shared by all algorithms of a run (instances).
SHARED_SLOT = 1 << 16


class ConfigError(ValueError):
    """Raised for malformed or out-of-range user configuration."""


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple[tuple[int, ...], ...]

    @classmethod
    def from_lists(cls, groups: Sequence[Sequence[int]]) -> "GroupPartition":
        return cls(tuple(tuple(int(a) for a in g) for g in groups))

    @classmethod
    def contiguous(cls, sizes: Sequence[int]) -> "GroupPartition":
        out, start = [], 0
        for k in sizes:
            out.append(tuple(range(start, start + int(k))))
            start += int(k)
        return cls(tuple(out))

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def k(self, g: int) -> int:
        return len(self.groups[g])

    def group_of(self) -> np.ndarray:
        """Group index of every arm (derived, never stored on the instance)."""
        owner = np.full(self.n, -1, dtype=np.int64)
        for g, arms in enumerate(self.groups):
            for a in arms:
                if 0 <= a < self.n:
                    owner[a] = g
        return owner


@dataclass(frozen=True)
class BanditInstance:
    means: tuple[float, ...]
    partition: GroupPartition
    reward_kind: str = BERNOULLI
    halfwidth: float = 0.0
    generator_seed: int | None = None

    @property
    def n(self) -> int:
        return len(self.means)

    @property
    def m(self) -> int:
        return self.partition.m

    def means_array(self) -> np.ndarray:
        return np.asarray(self.means, dtype=np.float64)

    def group_means(self, g: int) -> np.ndarray:
        return np.asarray([self.means[a] for a in self.partition.groups[g]], dtype=np.float64)


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


def validate_instance(instance: BanditInstance) -> ValidationReport:
    errors: list[str] = []
    n = instance.n
    groups = instance.partition.groups
    if not groups:
        errors.append("partition has no groups")
    seen: dict[int, int] = {}
    for g, arms in enumerate(groups):
        if not arms:
            errors.append(f"group {g} is empty")
        for a in arms:
            if not 0 <= a < n:
                errors.append(f"arm {a} in group {g} is not an arm index (n={n})")
            elif a in seen:
                errors.append(f"arm {a} in two groups ({seen[a]} and {g})")
            else:
                seen[a] = g
    missing = sorted(set(range(n)) - set(seen))
    if missing:
        errors.append(f"arms {missing} belong to no group")
    for i, mu in enumerate(instance.means):
        if not (0.0 <= mu <= 1.0):
            errors.append(f"arm {i}: mean {mu} out of [0,1]")
    if instance.reward_kind == UNIFORM_BAND:
        h = instance.halfwidth
        if h < 0:
            errors.append(f"uniform_band halfwidth {h} is negative")
        for i, mu in enumerate(instance.means):
            if mu - h < 0.0 or mu + h > 1.0:
                errors.append(f"arm {i}: band [{mu - h}, {mu + h}] leaves [0,1]")
    elif instance.reward_kind != BERNOULLI:
        errors.append(f"unknown reward kind {instance.reward_kind!r}")
    return ValidationReport(tuple(errors))


@dataclass
class RngStream:
    """Seeded stream identified by ``(seed, stream_id)``.

    The stream id is mixed into the seed through numpy's ``SeedSequence``
    spawn-key hashing and drives a Philox counter-based generator, so any two
    distinct ids give independent sequences and no state is shared between
    streams.
    """

    seed: int
    stream_id: tuple[int, ...]
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False)

    @classmethod
    def for_run(cls, seed: int, run: int, algorithm: str | int, purpose: int) -> "RngStream":
        slot = ALGORITHM_CODES[algorithm] if isinstance(algorithm, str) else int(algorithm)
        return cls(seed, (int(run), slot, int(purpose)))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=self.stream_id)
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def uniform(self) -> float:
        return float(self.generator.random())

    def uniforms(self, size: int) -> np.ndarray:
        return self.generator.random(size)


def reward_from_uniform(mu: float, u: float, kind: str, halfwidth: float) -> float:
    if kind == BERNOULLI:
        return 1.0 if u < mu else 0.0
    return mu - halfwidth + 2.0 * halfwidth * u


def sample_reward(instance: BanditInstance, arm: int, rng: RngStream) -> float:
    if not 0 <= arm < instance.n:
        raise IndexError(f"arm {arm} out of range for {instance.n} arms")
    return reward_from_uniform(instance.means[arm], rng.uniform(), instance.reward_kind, instance.halfwidth)


@dataclass(frozen=True)
class GeneratorSpec:
    sizes: tuple[int, ...]
    ranges: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.sizes) != len(self.ranges):
            raise ConfigError("generator needs one mean range per group")
        for k in self.sizes:
            if k < 1:
                raise ConfigError(f"group size {k} must be >= 1")
        for lo, hi in self.ranges:
            if not (0.0 <= lo <= hi <= 1.0):
                raise ConfigError(f"mean range [{lo}, {hi}] not inside [0,1]")


# Minority group first in both presets.
PRESETS = {
    "low_arms": GeneratorSpec((5, 10), ((0.6, 0.85), (0.6, 0.85))),
    "high_arms": GeneratorSpec((10, 50), ((0.5, 0.8), (0.7, 1.0))),
}


def generate_instance(
    spec: GeneratorSpec,
    rng: RngStream,
    reward_kind: str = BERNOULLI,
    halfwidth: float = 0.0,
) -> BanditInstance:
    gen = rng.generator
    means: list[float] = []
    for k, (lo, hi) in zip(spec.sizes, spec.ranges):
        means.extend(float(x) for x in lo + (hi - lo) * gen.random(k))
    inst = BanditInstance(
        tuple(means), GroupPartition.contiguous(spec.sizes), reward_kind, halfwidth, generator_seed=rng.seed
    )
    report = validate_instance(inst)
    if not report.ok:
        raise ConfigError("; ".join(report.errors))
    return inst


def dump_instance(instance: BanditInstance) -> str:
    doc = {
        "format": "bifair-instance/1",
        "means": list(instance.means),
        "groups": [list(g) for g in instance.partition.groups],
        "reward_kind": instance.reward_kind,
        "halfwidth": instance.halfwidth,
        "generator_seed": instance.generator_seed,
    }
    return json.dumps(doc, indent=2)


def load_instance(text: str) -> BanditInstance:
    doc = json.loads(text)
    if doc.get("format") != "bifair-instance/1":
        raise ConfigError(f"not an instance document: format={doc.get('format')!r}")
    return BanditInstance(
        tuple(float(x) for x in doc["means"]),
        GroupPartition.from_lists(doc["groups"]),
        doc.get("reward_kind", BERNOULLI),
        float(doc.get("halfwidth", 0.0)),
        doc.get("generator_seed"),
    )
