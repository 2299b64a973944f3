import numpy as np
import pytest

from bifair.env import PRESETS, ConfigError
from bifair.policies import FairnessConfig
from bifair.runner import (
    WORKERS_ENV,
    InstanceSource,
    RunConfig,
    checkpoint_schedule,
    default_workers,
    run_experiment,
    run_once,
)

BETA = FairnessConfig.parse(["2/5", "2/5"])


def cfg(preset="low_arms", T=2000, runs=2, **kw):
    return RunConfig(horizon=T, runs=runs, seed=5,
                     source=InstanceSource(generator=PRESETS[preset], regenerate_per_run=True), beta=BETA, **kw)


def test_checkpoint_schedule():
    cps = checkpoint_schedule(1000)
    assert cps[:10].tolist() == list(range(1, 11)) and cps[-1] == 1000
    assert np.all(np.diff(cps) > 0) and len(cps) <= 60
    assert 37 in checkpoint_schedule(100, extra=(37, 5000))


def test_same_inputs_same_snapshots():
    a = run_once(cfg(), "bf_ucb", 1)
    b = run_once(cfg(), "bf_ucb", 1)
    assert np.array_equal(a.snap_acc, b.snap_acc) and np.array_equal(a.snap_arms, b.snap_arms)


def test_runs_and_algorithms_share_instances_but_not_noise():
    a = run_once(cfg(), "bf_ucb", 0)
    b = run_once(cfg(), "gef_ucb", 0)
    c = run_once(cfg(), "bf_ucb", 1)
    assert a.instance == b.instance and a.instance != c.instance


def test_fixed_generated_instance_is_shared_by_runs():
    c = RunConfig(horizon=100, runs=2, seed=5, source=InstanceSource(generator=PRESETS["low_arms"]), beta=BETA)
    assert run_once(c, "ucb1", 0).instance == run_once(c, "ucb1", 1).instance


def test_horizon_equal_to_init_phase():
    c = cfg(T=20)
    assert c.t_init == 20
    res = run_once(c, "bf_ucb", 0)
    counts = res.final.arm_pulls
    assert counts.sum() == 20 and np.all(counts >= 1)
    assert res.final.group_pulls.tolist() == [10, 10]


def test_bf_keeps_exposure_floor():
    res = run_once(cfg(T=10**5), "bf_ucb", 0)
    assert res.snap_slack.min() >= 0 and res.final.min_gef_slack.min() >= 0


def test_single_run_has_zero_spread():
    agg = run_experiment(cfg(runs=1, algorithms=("bf_ucb",)), workers=1)
    s = agg.final_summary()["bf_ucb"]
    assert s["pseudo_regret"]["std"] == 0.0
    assert all(g["N_g_T"]["std"] == 0.0 for g in s["groups"])
    assert s["normalized_reward"]["std"] == 0.0


def test_normalizer_runs_added_when_ucb1_not_requested():
    agg = run_experiment(cfg(runs=2, algorithms=("gef_ucb",)), workers=1)
    assert list(agg.results) == ["gef_ucb"] and len(agg.normalizer) == 2
    assert agg.normalized_rewards("gef_ucb").shape == (2,)


def test_sequential_and_pooled_results_agree():
    c = cfg(runs=2, algorithms=("bf_ucb", "mf_ucb"))
    seq = run_experiment(c, workers=1)
    par = run_experiment(c, workers=2)
    for algo in c.algorithms:
        for r1, r2 in zip(seq.results[algo], par.results[algo]):
            assert np.array_equal(r1.snap_acc, r2.snap_acc)
            assert np.array_equal(r1.snap_fr, r2.snap_fr)
            assert np.array_equal(r1.snap_arms, r2.snap_arms)
    assert seq.final_summary() == par.final_summary()


def test_half_half_shares_rejected():
    bad = RunConfig(horizon=100, runs=1, seed=0, source=InstanceSource(generator=PRESETS["low_arms"]),
                    beta=FairnessConfig.parse(["1/2", "1/2"]))
    with pytest.raises(ConfigError, match="Σβ"):
        bad.validate()


def test_config_problems():
    c = cfg(T=5, runs=0, algorithms=("bf_ucb", "nope"), delta=2.0)
    msgs = " ".join(c.problems())
    for fragment in ("runs", "horizon", "nope", "delta"):
        assert fragment in msgs


def test_worker_env(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert default_workers() == 3
    monkeypatch.delenv(WORKERS_ENV)
    assert default_workers() >= 1


def test_mean_std_series():
    agg = run_experiment(cfg(runs=2, algorithms=("ucb1",)), workers=1)
    mean, std = agg.mean_std("ucb1", "group_pulls", "0")
    assert mean.shape == agg.checkpoints.shape and std.shape == mean.shape
