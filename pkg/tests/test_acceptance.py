"""End-to-end acceptance checks.

Each test records one PASS/FAIL line (shown in the terminal summary) and then
asserts. The long simulations share fixtures: the high-arms experiment at
T = 10^6 with 50 runs feeds the reward-ordering, exposure and regret-growth
checks.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from bifair.cli import main
from bifair.confreg import ConfidenceRegion, optimistic_means
from bifair.env import PRESETS
from bifair.merit import MeritSpec, merit_bounds
from bifair.oracle import optimal_reward
from bifair.policies import ALGORITHMS, FairnessConfig
from bifair.runner import InstanceSource, RunConfig, default_workers, run_experiment, run_once

from brute import best_fair_reward

pytestmark = pytest.mark.slow

BETA = FairnessConfig.parse(["2/5", "2/5"])
QUADRUPLING = tuple(10_000 * 4**k for k in range(4))  # 1e4 .. 6.4e5


def config(preset, T, runs, algorithms=ALGORITHMS, seed=20240601, **kw):
    return RunConfig(
        horizon=T, runs=runs, seed=seed,
        source=InstanceSource(generator=PRESETS[preset], regenerate_per_run=True),
        beta=BETA, algorithms=tuple(algorithms), **kw,
    )


@pytest.fixture(scope="session")
def high_arms_long():
    cfg = config("high_arms", 10**6, 50, extra_checkpoints=QUADRUPLING)
    return run_experiment(cfg, default_workers())


def test_anytime_exposure_floor(criterion):
    worst = {}
    for preset in ("low_arms", "high_arms"):
        cfg = config(preset, 10**5, 20, ("bf_ucb", "gef_ucb"), normalize=False)
        agg = run_experiment(cfg, default_workers())
        for algo in cfg.algorithms:
            # the kernel's running minimum covers every step, not only checkpoints
            worst[(preset, algo)] = min(int(r.final.min_gef_slack.min()) for r in agg.results[algo])
    ok = all(v >= 0 for v in worst.values())
    detail = ", ".join(f"{p}/{a} min slack {v}" for (p, a), v in worst.items())
    criterion(1, ok, f"anytime exposure floor held in every step of every run ({detail})")
    assert ok


def test_decomposition_identity(criterion):
    T = 10**5
    worst = 0.0
    for preset in ("low_arms", "high_arms"):
        agg = run_experiment(config(preset, T, 5, normalize=False), default_workers())
        for algo in ALGORITHMS:
            for r in agg.results[algo]:
                worst = max(worst, float(np.max(np.abs(r.residual()))))
    ok = worst <= 1e-9 * T
    criterion(2, ok, f"max |regret - term1 - term2| = {worst:.3e} (limit {1e-9 * T:.0e})")
    assert ok


def test_optimal_fair_reward(criterion):
    exact = optimal_reward([0.68, 0.60], 0, BETA, 10)
    gen = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        m = int(gen.integers(1, 4))
        T = int(gen.integers(1, 13))
        r = [float(x) for x in gen.uniform(0, 1, m)]
        beta = [Fraction(int(gen.integers(1, 10)), 10 * m) for _ in range(m)]
        got = optimal_reward(r, int(np.argmax(r)), FairnessConfig(tuple(beta)), T)
        worst = max(worst, abs(got - best_fair_reward(r, beta, T)))
    ok = exact == 6.48 and worst <= 1e-12
    criterion(3, ok, f"worked example = {exact!r}; max error vs schedule search on 50 instances = {worst:.1e}")
    assert ok


def _grid_max(lo, hi, points=101):
    axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    vals = (mesh * mesh).sum(axis=1) / mesh.sum(axis=1)
    i = int(np.argmax(vals))
    return vals[i], mesh[i]


def _region(lo, hi):
    k = len(lo)
    return ConfidenceRegion((lo + hi) / 2, (hi - lo) / 2, lo, hi, 1.0, k, k, 0.01)


def test_optimizer_against_grid(criterion):
    ident = MeritSpec.identity()
    gen = np.random.default_rng(11)
    worst_gap = 0.0
    for _ in range(100):
        k = int(gen.integers(1, 4))
        a, b = gen.uniform(ident.lo, 1.0, k), gen.uniform(ident.lo, 1.0, k)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        best, _ = _grid_max(lo, hi)
        worst_gap = max(worst_gap, best - optimistic_means(_region(lo, hi), ident).value)
    corner_exact = True
    for _ in range(100):
        k = int(gen.integers(1, 4))
        a, b = gen.uniform(0.5, 1.0, k), gen.uniform(0.5, 1.0, k)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        _, arg = _grid_max(lo, hi)
        mu = optimistic_means(_region(lo, hi), ident).mu_tilde
        corner_exact &= bool(np.array_equal(arg, hi) and np.array_equal(mu, hi))
    ok = worst_gap <= 1e-3 and corner_exact
    criterion(4, ok, f"grid max - optimizer value <= {worst_gap:.2e} on 100 regions; "
                     f"upper corner is the grid argmax on [0.5,1] boxes: {corner_exact}")
    assert ok


def test_within_group_policy_converges(criterion):
    T = 10**6
    cfg = config("low_arms", T, 20, ("bf_ucb",), normalize=False, extra_checkpoints=(T // 10,))
    agg = run_experiment(cfg, default_workers())
    cps = agg.checkpoints.tolist()
    i10, iT = cps.index(T // 10), cps.index(T)
    frn = np.stack([r.fr_norm() for r in agg.results["bf_ucb"]])  # runs x checkpoints x groups
    at10, atT = frn[:, i10].mean(axis=0), frn[:, iT].mean(axis=0)
    ok = bool(np.all(atT <= 0.5 * at10) and np.all(atT <= 0.1))
    criterion(5, ok, "normalized fairness regret per group at T/10 -> T: "
                     + ", ".join(f"g{g} {a:.4f} -> {b:.4f}" for g, (a, b) in enumerate(zip(at10, atT))))
    assert ok


def test_regret_grows_sublinearly(criterion, high_arms_long):
    agg = high_arms_long
    cps = agg.checkpoints.tolist()
    runs = agg.results["bf_ucb"][:20]
    regret = np.stack([r.pseudo_regret() for r in runs]).mean(axis=0)
    ratios = [regret[cps.index(4 * t)] / regret[cps.index(t)] for t in QUADRUPLING[:-1]]
    ok = all(0 < x <= 3 for x in ratios)
    criterion(6, ok, "mean regret ratios over quadruplings "
                     + ", ".join(f"{t}->{4 * t}: {x:.2f}" for t, x in zip(QUADRUPLING, ratios)))
    assert ok


def test_reward_ordering(criterion, high_arms_long):
    agg = high_arms_long
    order = ("ucb1", "gef_ucb", "mf_ucb", "bf_ucb")
    reward = {a: np.array([r.final.cum_reward_realized for r in agg.results[a]]) for a in order}
    parts, ok = [], True
    for hi, lo in zip(order, order[1:]):
        # runs share instances across algorithms, so differences are paired
        d = reward[hi] - reward[lo]
        se = d.std(ddof=1) / math.sqrt(d.size)
        ok &= bool(d.mean() > se)
        parts.append(f"{hi}-{lo} {d.mean():.0f} (se {se:.0f})")
    means = ", ".join(f"{a} {reward[a].mean():.0f}" for a in order)
    criterion(7, ok, f"mean final reward {means}; gaps {'; '.join(parts)}")
    assert ok


def test_group_exposure(criterion, high_arms_long):
    agg = high_arms_long
    T = agg.config.horizon
    floor = BETA.floor(0, T)
    minority = {a: np.array([r.final.group_pulls[0] for r in agg.results[a]]) for a in ALGORITHMS}
    mf_ok = minority["mf_ucb"].mean() < 0.5 * floor
    bf_ok = minority["bf_ucb"].min() >= floor
    ucb_ok = all(minority["ucb1"].mean() < minority[a].mean() for a in ALGORITHMS if a != "ucb1")
    ok = bool(mf_ok and bf_ok and ucb_ok)
    criterion(8, ok, f"minority pulls (floor {floor}): "
                     + ", ".join(f"{a} mean {v.mean():.0f} min {v.min()}" for a, v in minority.items()))
    assert ok


def test_min_pull_bound(criterion):
    delta = 0.01
    cfg = config("low_arms", 10**5, 100, ("bf_ucb",), normalize=False, delta=delta)
    agg = run_experiment(cfg, default_workers())
    g1, g2, _ = merit_bounds(cfg.merit)
    held = total = 0
    held_tight = 0
    for r in agg.results["bf_ucb"]:
        for g, arms in enumerate(r.instance.partition.groups):
            k = len(arms)
            n_g = int(r.final.group_pulls[g])
            dev = math.sqrt(n_g * math.log(k / delta) / 2)
            # informative variant: merit range of this group's true means
            mu = r.instance.group_means(g)
            tight = n_g * mu.min() / (k * mu.max()) - dev
            for a in arms:
                n_i = int(r.final.arm_pulls[a])
                held += n_i >= n_g * g1 / (k * g2) - dev
                held_tight += n_i >= tight
                total += 1
    frac = held / total
    ok = frac >= 0.99
    criterion(9, ok, f"per-arm minimum-pull inequality held for {held}/{total} (run, arm) pairs "
                     f"(with instance merit range instead of domain bounds: {held_tight}/{total})")
    assert ok


def test_determinism(criterion, tmp_path):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(
        "experiment: {horizon: 20000, runs: 3, seed: 99}\n"
        "instance: {preset: high_arms}\n"
        'fairness: {beta: ["2/5", "2/5"]}\n'
    )
    dirs = [tmp_path / "seq1", tmp_path / "seq2", tmp_path / "pool"]
    codes = [
        main(["run", str(cfg_path), "--out", str(dirs[0]), "--workers", "1"]),
        main(["run", str(cfg_path), "--out", str(dirs[1]), "--workers", "1"]),
        main(["run", str(cfg_path), "--out", str(dirs[2]), "--workers", "3"]),
    ]
    same = all(
        (dirs[0] / name).read_bytes() == (d / name).read_bytes()
        for d in dirs[1:]
        for name in ("timeseries.csv", "summary.json", "resolved_config.yaml")
    )
    rerun = run_once(config("low_arms", 5000, 1), "mf_ucb", 0, keep_trace=True)
    again = run_once(config("low_arms", 5000, 1), "mf_ucb", 0, keep_trace=True)
    same &= bool(np.array_equal(rerun.trace, again.trace))
    ok = codes == [0, 0, 0] and same
    criterion(10, ok, f"repeated and pooled runs byte-identical: {same} (exit codes {codes})")
    assert ok
