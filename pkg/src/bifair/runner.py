"""Multi-run, multi-algorithm experiments with independent seeded streams."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel
from .confreg import OptimizerSettings
from .env import (
    ALGORITHM_CODES,
    PURPOSE_FIXED_INSTANCE,
    PURPOSE_INSTANCE,
    PURPOSE_POLICY,
    PURPOSE_REWARD,
    SHARED_SLOT,
    UNIFORM_BAND,
    BanditInstance,
    ConfigError,
    GeneratorSpec,
    RngStream,
    generate_instance,
    validate_instance,
)
from .merit import MeritSpec
from .metrics import NO_SLACK_YET, MetricsAccumulator, term1
from .oracle import OracleSummary, summarize
from .policies import ALGORITHMS, FairnessConfig

WORKERS_ENV = "BIFAIR_WORKERS"
CHUNK = 1 << 15

METRICS = (
    "pseudo_regret",
    "realized_reward",
    "term1",
    "term2",
    "fr_norm",
    "gef_slack",
    "group_pulls",
    "arm_pulls",
)


@dataclass(frozen=True)
class InstanceSource:
    """Either a fixed instance or a generator, optionally redrawn every run."""

    instance: BanditInstance | None = None
    generator: GeneratorSpec | None = None
    regenerate_per_run: bool = False
    reward_kind: str = "bernoulli"
    halfwidth: float = 0.0

    def __post_init__(self):
        if (self.instance is None) == (self.generator is None):
            raise ConfigError("instance source needs exactly one of an explicit instance or a generator")
        if self.instance is not None and self.regenerate_per_run:
            raise ConfigError("an explicit instance cannot be regenerated per run")

    def sizes(self) -> tuple[int, ...]:
        return self.instance.partition.sizes if self.instance is not None else self.generator.sizes

    def for_run(self, seed: int, run: int) -> BanditInstance:
        if self.instance is not None:
            return self.instance
        if self.regenerate_per_run:
            rng = RngStream(seed, (run, SHARED_SLOT, PURPOSE_INSTANCE))
        else:
            rng = RngStream(seed, (0, SHARED_SLOT, PURPOSE_FIXED_INSTANCE))
        return generate_instance(self.generator, rng, self.reward_kind, self.halfwidth)


@dataclass(frozen=True)
class RunConfig:
    horizon: int
    runs: int
    seed: int
    source: InstanceSource
    beta: FairnessConfig
    merit: MeritSpec = field(default_factory=MeritSpec.identity)
    delta: float = 0.01
    algorithms: tuple[str, ...] = ALGORITHMS
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    checkpoints_per_decade: int = 16
    extra_checkpoints: tuple[int, ...] = ()
    normalize: bool = True

    @property
    def t_init(self) -> int:
        sizes = self.source.sizes()
        return len(sizes) * max(sizes)

    def problems(self) -> list[str]:
        errs = []
        if self.runs < 1:
            errs.append(f"runs must be >= 1 (got {self.runs})")
        if self.horizon < self.t_init:
            errs.append(f"horizon {self.horizon} shorter than the initial round-robin phase ({self.t_init})")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                errs.append(f"unknown algorithm {a!r}; expected one of {', '.join(ALGORITHMS)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            errs.append("algorithm list has duplicates")
        if not self.algorithms:
            errs.append("no algorithms selected")
        if not 0.0 < self.delta < 1.0:
            errs.append(f"delta {self.delta} must lie in (0, 1)")
        if self.checkpoints_per_decade < 1:
            errs.append("checkpoints_per_decade must be >= 1")
        errs += self.beta.problems(len(self.source.sizes()))
        errs += self.merit.problems()
        if self.source.instance is not None:
            errs += list(validate_instance(self.source.instance).errors)
        return errs

    def validate(self) -> "RunConfig":
        errs = self.problems()
        if errs:
            raise ConfigError("; ".join(errs))
        return self


def checkpoint_schedule(T: int, per_decade: int = 16, extra=()) -> np.ndarray:
    """Every t in 1..10, then ``per_decade`` log-spaced points per decade, then T."""
    pts = set(range(1, min(10, T) + 1))
    j = per_decade
    while True:
        t = int(round(10.0 ** (j / per_decade)))
        if t > T:
            break
        pts.add(t)
        j += 1
    pts.add(T)
    pts.update(int(e) for e in extra if 1 <= int(e) <= T)
    return np.array(sorted(pts), dtype=np.int64)


@dataclass
class RunResult:
    algorithm: str
    run: int
    instance: BanditInstance
    oracle: OracleSummary
    checkpoints: np.ndarray
    snap_acc: np.ndarray  # (c, 3): realized reward, expected reward, term2
    snap_fr: np.ndarray
    snap_slack: np.ndarray
    snap_group: np.ndarray
    snap_arms: np.ndarray
    final: MetricsAccumulator
    trace: np.ndarray | None = None

    def pseudo_regret(self) -> np.ndarray:
        return np.array([self.oracle.optimal_reward_at(int(t)) for t in self.checkpoints]) - self.snap_acc[:, 1]

    def term1(self) -> np.ndarray:
        return np.array([term1(self.oracle, self.oracle.beta, ng, int(t)) for t, ng in zip(self.checkpoints, self.snap_group)])

    def residual(self) -> np.ndarray:
        return self.pseudo_regret() - self.term1() - self.snap_acc[:, 2]

    def fr_norm(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.snap_group > 0, self.snap_fr / np.maximum(self.snap_group, 1), np.nan)


def _group_layout(instance: BanditInstance):
    groups = instance.partition.groups
    garms = np.array([a for g in groups for a in g], dtype=np.int64)
    gptr = np.zeros(len(groups) + 1, dtype=np.int64)
    gptr[1:] = np.cumsum([len(g) for g in groups])
    owner = instance.partition.group_of()
    pos_of = np.empty(instance.n, dtype=np.int64)
    pos_of[garms] = np.arange(instance.n)
    return garms, gptr, owner, pos_of


def run_once(config: RunConfig, algorithm: str, run: int, keep_trace: bool = False) -> RunResult:
    instance = config.source.for_run(config.seed, run)
    oracle = summarize(instance, config.merit, config.beta, config.horizon)
    T = config.horizon
    n, m = instance.n, instance.m
    garms, gptr, owner, pos_of = _group_layout(instance)
    beta_num, beta_den = config.beta.common_denominator()
    kind, a, b, p = config.merit.params
    opt = config.optimizer

    counts_g = np.zeros(n, dtype=np.int64)
    sums_g = np.zeros(n)
    counts_p = np.zeros(n, dtype=np.int64)
    sums_p = np.zeros(n)
    gcounts = np.zeros(m, dtype=np.int64)
    cache_valid = np.zeros(m, dtype=np.bool_)
    cache_val = np.zeros(m)
    cache_mu = np.zeros(n)
    r_star = np.asarray(oracle.r_star, dtype=np.float64)
    pi_star = np.concatenate(oracle.pi_star)
    acc = np.zeros(3)
    fr = np.zeros(m)
    min_slack = np.full(m, NO_SLACK_YET, dtype=np.int64)

    cps = checkpoint_schedule(T, config.checkpoints_per_decade, config.extra_checkpoints)
    c = cps.size
    cp_pos = np.zeros(1, dtype=np.int64)
    snap_acc = np.zeros((c, 3))
    snap_fr = np.zeros((c, m))
    snap_slack = np.zeros((c, m), dtype=np.int64)
    snap_group = np.zeros((c, m), dtype=np.int64)
    snap_arms = np.zeros((c, n), dtype=np.int64)

    reward_rng = RngStream.for_run(config.seed, run, algorithm, PURPOSE_REWARD)
    policy_rng = RngStream.for_run(config.seed, run, algorithm, PURPOSE_POLICY)
    reward_code = _kernel.UNIFORM_BAND if instance.reward_kind == UNIFORM_BAND else _kernel.BERNOULLI
    means = instance.means_array()
    trace_all = np.empty(T, dtype=np.int64) if keep_trace else None
    trace = np.empty(CHUNK, dtype=np.int64)

    t = 0
    while t < T:
        steps = min(CHUNK, T - t)
        ur = reward_rng.uniforms(steps)
        up = policy_rng.uniforms(steps)
        t_new = _kernel.simulate(
            ALGORITHM_CODES[algorithm], t, steps, config.t_init,
            means, reward_code, float(instance.halfwidth),
            garms, gptr, owner, pos_of,
            beta_num, int(beta_den),
            kind, a, b, p, config.merit.lo, config.merit.hi, float(config.delta),
            opt.grid, opt.sweeps, float(opt.tol),
            counts_g, sums_g, counts_p, sums_p, gcounts,
            cache_valid, cache_val, cache_mu,
            r_star, pi_star,
            acc, fr, min_slack,
            ur, up,
            cps, cp_pos, snap_acc, snap_fr, snap_slack, snap_group, snap_arms,
            trace,
        )
        if keep_trace:
            trace_all[t:t_new] = trace[:steps]
        t = t_new

    final = MetricsAccumulator.create(instance, config.beta)
    final.cum_reward_realized = float(acc[0])
    final.cum_expected_reward = float(acc[1])
    final.term2 = float(acc[2])
    final.fr[:] = fr
    final.min_gef_slack[:] = min_slack
    final.group_pulls[:] = gcounts
    final.arm_pulls[:] = counts_g
    final.t = T
    return RunResult(algorithm, run, instance, oracle, cps, snap_acc, snap_fr, snap_slack, snap_group, snap_arms, final,
                     trace_all)


def _task(args):
    config, algorithm, run = args
    return run_once(config, algorithm, run)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class AggregateResult:
    config: RunConfig
    checkpoints: np.ndarray
    results: dict[str, list[RunResult]]
    normalizer: list[RunResult] | None

    @property
    def algorithms(self) -> tuple[str, ...]:
        return self.config.algorithms

    def series(self, algorithm: str, run: int):
        """Long-format rows ``(metric, group_label, values over checkpoints)`` for one run."""
        res = self.results[algorithm][run]
        smallest = int(np.argmin(res.instance.partition.sizes))
        out = [
            ("pseudo_regret", "", res.pseudo_regret()),
            ("realized_reward", "", res.snap_acc[:, 0]),
            ("term1", "", res.term1()),
            ("term2", "", res.snap_acc[:, 2]),
        ]
        fr_norm = res.fr_norm()
        for g in range(res.instance.m):
            out.append(("fr_norm", str(g), fr_norm[:, g]))
            out.append(("gef_slack", str(g), res.snap_slack[:, g]))
            out.append(("group_pulls", str(g), res.snap_group[:, g]))
        for arm in res.instance.partition.groups[smallest]:
            out.append(("arm_pulls", f"{smallest}:{arm}", res.snap_arms[:, arm]))
        return out

    def mean_std(self, algorithm: str, metric: str, group: str = ""):
        """Mean and sample std across runs of one series at every checkpoint."""
        stacked = []
        for r in range(self.config.runs):
            for name, label, values in self.series(algorithm, r):
                if name == metric and label == group:
                    stacked.append(np.asarray(values, dtype=np.float64))
        data = np.vstack(stacked)
        return data.mean(axis=0), _std(data)

    def normalized_rewards(self, algorithm: str) -> np.ndarray | None:
        if self.normalizer is None:
            return None
        return np.array([
            r.final.cum_reward_realized / u.final.cum_reward_realized
            for r, u in zip(self.results[algorithm], self.normalizer)
        ])

    def final_summary(self) -> dict:
        out = {}
        for algo in self.algorithms:
            runs = self.results[algo]
            regret = np.array([r.pseudo_regret()[-1] for r in runs])
            t1 = np.array([r.term1()[-1] for r in runs])
            t2 = np.array([r.final.term2 for r in runs])
            realized = np.array([r.final.cum_reward_realized for r in runs])
            resid = max(float(np.max(np.abs(r.residual()))) for r in runs)
            entry = {
                "pseudo_regret": _ms(regret),
                "realized_reward": _ms(realized),
                "term1": _ms(t1),
                "term2": _ms(t2),
                "residual_max": resid,
            }
            norm = self.normalized_rewards(algo)
            if norm is not None:
                entry["normalized_reward"] = _ms(norm)
            groups = []
            inst = runs[0].instance
            for g in range(inst.m):
                ng = np.array([r.final.group_pulls[g] for r in runs], dtype=np.float64)
                slack = np.array([r.final.min_gef_slack[g] for r in runs], dtype=np.float64)
                frn = np.array([r.fr_norm()[-1, g] for r in runs])
                groups.append({
                    "group": g,
                    "N_g_T": _ms(ng),
                    "min_gef_slack": {**_ms(slack), "min": int(slack.min())},
                    "normalized_fr": _ms(frn),
                })
            entry["groups"] = groups
            smallest = int(np.argmin(inst.partition.sizes))
            arms = inst.partition.groups[smallest]
            per_arm = np.array([[r.final.arm_pulls[a] for a in arms] for r in runs], dtype=np.float64)
            entry["smallest_group_arm_pulls"] = {
                "group": smallest,
                "arms": list(arms),
                "mean": per_arm.mean(axis=0).tolist(),
                "std": _std(per_arm).tolist(),
            }
            out[algo] = entry
        return out


def _std(data: np.ndarray) -> np.ndarray:
    if data.shape[0] < 2:
        return np.zeros(data.shape[1:]) if data.ndim > 1 else np.float64(0.0)
    return data.std(axis=0, ddof=1)


def _ms(values: np.ndarray) -> dict:
    values = np.asarray(values, dtype=np.float64)
    return {"mean": float(values.mean()), "std": float(_std(values))}


def run_experiment(config: RunConfig, workers: int | None = None) -> AggregateResult:
    config.validate()
    workers = default_workers() if workers is None else max(1, int(workers))
    algos = list(config.algorithms)
    extra_norm = config.normalize and "ucb1" not in algos
    tasks = [(config, a, r) for a in algos for r in range(config.runs)]
    if extra_norm:
        tasks += [(config, "ucb1", r) for r in range(config.runs)]
    if workers == 1 or len(tasks) == 1:
        done = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            done = list(pool.map(_task, tasks))
    results: dict[str, list[RunResult]] = {a: [] for a in algos}
    normalizer = None
    for (cfg, algo, run), res in zip(tasks, done):
        if extra_norm and algo == "ucb1":
            normalizer = normalizer or []
            normalizer.append(res)
        else:
            results[algo].append(res)
    if config.normalize and not extra_norm:
        normalizer = results["ucb1"]
    cps = checkpoint_schedule(config.horizon, config.checkpoints_per_decade, config.extra_checkpoints)
    return AggregateResult(config, cps, results, normalizer)


def with_overrides(config: RunConfig, **changes) -> RunConfig:
    changes = {k: v for k, v in changes.items() if v is not None}
    return replace(config, **changes)
