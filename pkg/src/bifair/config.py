"""Experiment config files (YAML).

Layout, with defaults for every optional key::

    experiment:
      horizon: 1000000
      runs: 50
      seed: 0
      checkpoints_per_decade: 16
      extra_checkpoints: []
      normalize: true
    instance:
      preset: high_arms            # or `groups` + `means`, or `generator`
      regenerate_per_run: true     # presets and generators only
      reward: {kind: bernoulli, halfwidth: 0.0}
    fairness:
      beta: ["2/5", "2/5"]
    merit: {kind: identity, params: {}, merit_floor: 0.001}
    delta: 0.01
    optimizer: {grid: 33, sweeps: 20, tol: 1.0e-10}
    algorithms: [bf_ucb, ucb1, mf_ucb, gef_ucb]

Shape problems (bad YAML, unknown keys, wrong types) raise
:class:`ConfigParseError` with the offending key path. Range problems are
left to :func:`check` so every one of them can be reported at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .confreg import OptimizerSettings
from .env import BERNOULLI, PRESETS, BanditInstance, ConfigError, GeneratorSpec, GroupPartition, validate_instance
from .merit import DEFAULT_MERIT_FLOOR, MeritSpec
from .policies import ALGORITHMS, FairnessConfig, parse_fraction
from .runner import InstanceSource, RunConfig

_TOP = {"experiment", "instance", "fairness", "merit", "delta", "optimizer", "algorithms"}
_EXPERIMENT = {"horizon", "runs", "seed", "checkpoints_per_decade", "extra_checkpoints", "normalize"}
_INSTANCE = {"preset", "groups", "means", "generator", "regenerate_per_run", "reward"}
_MERIT_PARAMS = {"identity": set(), "affine": {"a", "b"}, "power": {"p"}}


class ConfigParseError(ConfigError):
    """The file could not be read or does not have the expected shape."""


@dataclass(frozen=True)
class ExperimentConfig:
    """A parsed file: the run configuration plus how the instance was described."""

    run: RunConfig
    instance_doc: dict  # normalised `instance:` section, kept for echoing
    source_error: str | None = None  # instance problem found while building the source


def _mapping(value, where: str, allowed: set[str]) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigParseError(f"{where}: expected a mapping, got {type(value).__name__}")
    unknown = sorted(set(map(str, value)) - allowed)
    if unknown:
        raise ConfigParseError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return value


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        # allow 1e6-style floats that are whole numbers
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigParseError(f"{where}: expected an integer, got {value!r}")
    return value


def _float(value, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigParseError(f"{where}: expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigParseError(f"{where}: expected a number, got {value!r}") from None


def _bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigParseError(f"{where}: expected true or false, got {value!r}")
    return value


def _list(value, where: str) -> list:
    if not isinstance(value, list):
        raise ConfigParseError(f"{where}: expected a list, got {value!r}")
    return value


def _source(doc: dict) -> tuple[InstanceSource | None, dict, str | None]:
    inst = _mapping(doc, "instance", _INSTANCE)
    reward = _mapping(inst.get("reward"), "instance.reward", {"kind", "halfwidth"})
    kind = str(reward.get("kind", BERNOULLI))
    halfwidth = _float(reward.get("halfwidth", 0.0), "instance.reward.halfwidth")
    ways = [k for k in ("preset", "groups", "generator") if k in inst]
    if "means" in inst and "groups" not in inst:
        raise ConfigParseError("instance.means: explicit means need instance.groups too")
    if len(ways) != 1:
        raise ConfigParseError("instance: give exactly one of preset, groups+means, generator")
    way = ways[0]
    echo: dict = {}
    if way == "preset":
        name = inst["preset"]
        if name not in PRESETS:
            raise ConfigParseError(f"instance.preset: unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
        regen = _bool(inst.get("regenerate_per_run", True), "instance.regenerate_per_run")
        echo = {"preset": name, "regenerate_per_run": regen}
        gen, instance = PRESETS[name], None
    elif way == "generator":
        g = _mapping(inst["generator"], "instance.generator", {"sizes", "ranges"})
        sizes = tuple(_int(k, "instance.generator.sizes") for k in _list(g.get("sizes"), "instance.generator.sizes"))
        ranges = []
        for r in _list(g.get("ranges"), "instance.generator.ranges"):
            r = _list(r, "instance.generator.ranges")
            if len(r) != 2:
                raise ConfigParseError(f"instance.generator.ranges: each range needs two numbers, got {r!r}")
            ranges.append((_float(r[0], "instance.generator.ranges"), _float(r[1], "instance.generator.ranges")))
        regen = _bool(inst.get("regenerate_per_run", True), "instance.regenerate_per_run")
        echo = {"generator": {"sizes": list(sizes), "ranges": [list(r) for r in ranges]}, "regenerate_per_run": regen}
        try:
            gen, instance = GeneratorSpec(sizes, tuple(ranges)), None
        except ConfigError as exc:
            return None, echo | {"reward": {"kind": kind, "halfwidth": halfwidth}}, str(exc)
    else:
        groups = [
            [_int(a, "instance.groups") for a in _list(g, "instance.groups")]
            for g in _list(inst["groups"], "instance.groups")
        ]
        means = [_float(x, "instance.means") for x in _list(inst.get("means"), "instance.means")]
        regen = _bool(inst.get("regenerate_per_run", False), "instance.regenerate_per_run")
        echo = {"groups": groups, "means": means, "regenerate_per_run": regen}
        gen, instance = None, BanditInstance(tuple(means), GroupPartition.from_lists(groups), kind, halfwidth)
    echo["reward"] = {"kind": kind, "halfwidth": halfwidth}
    try:
        src = InstanceSource(instance, gen, regen, kind, halfwidth)
    except ConfigError as exc:
        # explicit instance asked to regenerate: keep it, flag it
        return InstanceSource(instance, gen, False, kind, halfwidth), echo, str(exc)
    return src, echo, None


def _merit(doc) -> MeritSpec:
    m = _mapping(doc, "merit", {"kind", "params", "merit_floor"})
    kind = str(m.get("kind", "identity"))
    if kind not in _MERIT_PARAMS:
        raise ConfigParseError(f"merit.kind: unknown merit {kind!r}; expected one of {', '.join(_MERIT_PARAMS)}")
    params = _mapping(m.get("params"), "merit.params", _MERIT_PARAMS[kind])
    floor = _float(m.get("merit_floor", DEFAULT_MERIT_FLOOR), "merit.merit_floor")
    if kind == "affine":
        return MeritSpec.affine(_float(params.get("a", 1.0), "merit.params.a"),
                                _float(params.get("b", 0.0), "merit.params.b"), floor)
    if kind == "power":
        return MeritSpec.power(_float(params.get("p", 1.0), "merit.params.p"), floor)
    return MeritSpec.identity(floor)


def parse_config(doc) -> ExperimentConfig:
    """Turn a loaded YAML document into an :class:`ExperimentConfig`."""
    doc = _mapping(doc, "<top level>", _TOP)
    for key in ("experiment", "instance", "fairness"):
        if key not in doc:
            raise ConfigParseError(f"{key}: missing required section")
    exp = _mapping(doc["experiment"], "experiment", _EXPERIMENT)
    for key in ("horizon", "runs"):
        if key not in exp:
            raise ConfigParseError(f"experiment.{key}: missing")
    horizon = _int(exp["horizon"], "experiment.horizon")
    runs = _int(exp["runs"], "experiment.runs")
    seed = _int(exp.get("seed", 0), "experiment.seed")
    per_decade = _int(exp.get("checkpoints_per_decade", 16), "experiment.checkpoints_per_decade")
    extra = tuple(_int(t, "experiment.extra_checkpoints") for t in _list(exp.get("extra_checkpoints", []),
                                                                           "experiment.extra_checkpoints"))
    normalize = _bool(exp.get("normalize", True), "experiment.normalize")

    source, inst_echo, source_error = _source(doc["instance"])

    fair = _mapping(doc["fairness"], "fairness", {"beta"})
    if "beta" not in fair:
        raise ConfigParseError("fairness.beta: missing")
    beta_list = _list(fair["beta"], "fairness.beta")
    try:
        beta = FairnessConfig(tuple(parse_fraction(b) for b in beta_list))
    except ConfigError as exc:
        raise ConfigParseError(f"fairness.beta: {exc}") from None

    merit = _merit(doc.get("merit"))
    delta = _float(doc.get("delta", 0.01), "delta")
    opt = _mapping(doc.get("optimizer"), "optimizer", {"grid", "sweeps", "tol"})
    grid = _int(opt.get("grid", OptimizerSettings.grid), "optimizer.grid")
    sweeps = _int(opt.get("sweeps", OptimizerSettings.sweeps), "optimizer.sweeps")
    tol = _float(opt.get("tol", OptimizerSettings.tol), "optimizer.tol")
    try:
        optimizer = OptimizerSettings(grid, sweeps, tol)
    except ValueError as exc:
        raise ConfigParseError(f"optimizer: {exc}") from None
    algos = tuple(str(a) for a in _list(doc.get("algorithms", list(ALGORITHMS)), "algorithms"))

    if source is None:
        # unusable generator: keep a placeholder so the remaining checks still run
        source = InstanceSource(generator=PRESETS["low_arms"])
    run = RunConfig(
        horizon=horizon, runs=runs, seed=seed, source=source, beta=beta, merit=merit, delta=delta,
        algorithms=algos, optimizer=optimizer, checkpoints_per_decade=per_decade,
        extra_checkpoints=extra, normalize=normalize,
    )
    return ExperimentConfig(run, inst_echo, source_error)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"{path}: {exc.strerror or exc}") from None
    return loads_config(text, str(path))


def loads_config(text: str, name: str = "<string>") -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{name}:{mark.line + 1}:{mark.column + 1}" if mark else name
        raise ConfigParseError(f"{where}: invalid YAML ({getattr(exc, 'problem', None) or exc})") from None
    try:
        return parse_config(doc)
    except ConfigParseError as exc:
        raise ConfigParseError(f"{name}: {exc}") from None


def check(cfg: ExperimentConfig) -> list[tuple[str, list[str]]]:
    """Every constraint check by topic, each with its (possibly empty) list of failures."""
    run = cfg.run
    m = len(run.source.sizes())
    inst_errs = [cfg.source_error] if cfg.source_error else []
    if run.source.instance is not None:
        inst_errs += list(validate_instance(run.source.instance).errors)
    general = [e for e in run.problems() if e not in inst_errs]
    beta_errs = run.beta.problems(m)
    merit_errs = run.merit.problems()
    general = [e for e in general if e not in beta_errs and e not in merit_errs]
    return [
        ("fairness β (range and sum)", beta_errs),
        ("merit positivity", merit_errs),
        ("instance", inst_errs),
        ("experiment settings", general),
    ]


def resolved_document(cfg: ExperimentConfig) -> dict:
    """The effective configuration with every default made explicit."""
    run = cfg.run
    merit = run.merit
    params = {"identity": {}, "affine": {"a": merit.a, "b": merit.b}, "power": {"p": merit.p}}[merit.kind]
    return {
        "experiment": {
            "horizon": run.horizon,
            "runs": run.runs,
            "seed": run.seed,
            "checkpoints_per_decade": run.checkpoints_per_decade,
            "extra_checkpoints": list(run.extra_checkpoints),
            "normalize": run.normalize,
        },
        "instance": cfg.instance_doc,
        "fairness": {"beta": run.beta.as_strings()},
        "merit": {"kind": merit.kind, "params": params, "merit_floor": merit.lo},
        "delta": run.delta,
        "optimizer": {"grid": run.optimizer.grid, "sweeps": run.optimizer.sweeps, "tol": run.optimizer.tol},
        "algorithms": list(run.algorithms),
    }


def dump_resolved(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(resolved_document(cfg), sort_keys=False, default_flow_style=None)


def with_run(cfg: ExperimentConfig, run: RunConfig) -> ExperimentConfig:
    return ExperimentConfig(run, cfg.instance_doc, cfg.source_error)


__all__ = [
    "ConfigParseError",
    "ExperimentConfig",
    "check",
    "dump_resolved",
    "load_config",
    "loads_config",
    "parse_config",
    "resolved_document",
    "with_run",
]
