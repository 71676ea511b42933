"""Acceptance suite: one test per criterion, each printing a single verdict line.

The closed-loop criteria share two desk-scale training runs (K = 2 and
K = 4 from ``configs/desk.yaml``) and one 300-episode matched-seed
evaluation per method and setting. Trained checkpoints are cached under
``.acceptance_cache/`` keyed by the full training config, together with
the wall time of the run that produced them.
"""
import dataclasses
import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from intmpc.cli import main as cli_main
from intmpc.config import CoopSetting, SacConfig, TrainConfig, load_yaml, to_dict
from intmpc.evaluation import (comparison_table, evaluate, intmpc, mpcc_baseline, rank_sum_test,
                               EvalReport)
from intmpc.guidance.policy import squashed_log_prob
from intmpc.guidance.replay import ReplayBuffer, Transition
from intmpc.guidance.sac import SacAgent, sac_update
from intmpc.guidance.train import train
from intmpc.mpcc import SolveStatus, collision_margin, solve
from intmpc.dynamics import VehicleState
from intmpc.nn import load_checkpoint, save_checkpoint
from intmpc.traffic.idm import (EGO_LEADER, NO_LEADER, idm_acceleration, idm_accelerations,
                                select_leaders, IdmParams)
from oracles import (H, central_difference, convex_instance, convex_oracle, grid_oracle,
                     obstacle_instance, random_point, relative_error, shooting_terms,
                     trajectory_cost)

pytestmark = pytest.mark.slow

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".acceptance_cache"
DESK = ROOT / "configs" / "desk.yaml"
SETTINGS = [c.value for c in CoopSetting]
N_INVARIANT = 300
N_ORDERING = 200


def verdict(capsys, criterion, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


# ------------------------------------------------------------ shared fixtures

def trained(cfg: TrainConfig):
    """Checkpoint and training wall time for ``cfg``, from cache when available."""
    key = hashlib.sha256(json.dumps(to_dict(cfg), sort_keys=True).encode()).hexdigest()[:16]
    ckpt_path, meta_path = CACHE / f"{key}.bin", CACHE / f"{key}.json"
    if ckpt_path.exists() and meta_path.exists():
        return load_checkpoint(ckpt_path), json.loads(meta_path.read_text())["seconds"]
    CACHE.mkdir(exist_ok=True)
    t0 = time.perf_counter()
    result = train(cfg)
    seconds = time.perf_counter() - t0
    save_checkpoint(result.checkpoint, ckpt_path)
    meta_path.write_text(json.dumps({"seconds": seconds, "config": to_dict(cfg)}))
    return result.checkpoint, seconds


@pytest.fixture(scope="module")
def desk_config():
    return load_yaml(DESK, TrainConfig)


@pytest.fixture(scope="module")
def policy_k2(desk_config):
    assert desk_config.K == 2
    return trained(desk_config)


@pytest.fixture(scope="module")
def policy_k4(desk_config):
    return trained(dataclasses.replace(desk_config, K=4))


@pytest.fixture(scope="module")
def closed_loop(policy_k2):
    """300 matched-seed episodes per method and setting, plus total wall time."""
    ckpt, _ = policy_k2
    t0 = time.perf_counter()
    reports = {}
    for setting in SETTINGS:
        reports["intmpc", setting] = evaluate(intmpc(ckpt), coop=setting, n=N_INVARIANT)
        reports["mpcc", setting] = evaluate(mpcc_baseline(), coop=setting, n=N_INVARIANT)
    return reports, time.perf_counter() - t0


def first(report: EvalReport, n: int) -> EvalReport:
    return EvalReport(report.method, report.scenario, report.coop_setting,
                      [e for e in report.episodes if e.seed < n], timeout=report.timeout)


# ------------------------------------------------------------ 1

def test_criterion_1_zero_collisions(closed_loop, capsys):
    reports, seconds = closed_loop
    parts, ok = [], seconds < 1800
    for (method, setting), rep in sorted(reports.items()):
        # audit: every braking episode is classified and none hides a feasible-plan collision
        braking = rep.braking_episodes
        braking_collisions = sum(e.outcome == "collision" for e in braking)
        violations = rep.invariant_violations()
        collisions = rep.counts["collision"]
        ok &= collisions == 0 and not violations
        parts.append(f"{method}/{setting}: {collisions} coll "
                     f"({braking_collisions} after braking, {len(braking)} braking eps)")
    verdict(capsys, 1, ok, f"{'; '.join(parts)}; {seconds / 60:.1f} min")


# ------------------------------------------------------------ 2

def test_criterion_2_ordering(policy_k2, closed_loop, capsys):
    _, train_seconds = policy_k2
    reports, _ = closed_loop
    ok = train_seconds < 7200
    parts = []
    for setting in SETTINGS:
        a = first(reports["intmpc", setting], N_ORDERING)
        b = first(reports["mpcc", setting], N_ORDERING)
        assert a.n == b.n == N_ORDERING
        ok &= a.rate("success") >= b.rate("success")
        parts.append(f"{setting} {a.rate('success'):.1f}>={b.rate('success'):.1f}")
    mixed_coll = first(reports["mpcc", "mixed"], N_ORDERING).rate("collision")
    ok &= mixed_coll > 0
    verdict(capsys, 2, ok, f"success {', '.join(parts)}; baseline mixed collision "
            f"{mixed_coll:.1f}%; train {train_seconds / 60:.1f} min")


# ------------------------------------------------------------ 3

def test_criterion_3_reference_speed_trend(capsys):
    cells = [evaluate(mpcc_baseline(v_ref=v, q_v=10.0), coop="mixed", n=100)
             for v in (2.0, 3.0, 4.0)]
    coll = [c.rate("collision") for c in cells]
    tout = [c.rate("timeout") for c in cells]
    ok = coll[0] < coll[1] < coll[2] and tout[0] >= tout[1] >= tout[2]
    verdict(capsys, 3, ok, f"q_v=10 v_ref 2/3/4: collision {coll}, timeout {tout}")


# ------------------------------------------------------------ 4

def leaders_oracle(x, y_lane, coop, ego_x, ego_y_offset):
    """Nearest vehicle ahead in the same lane, or the ego when it is nearer and gated in."""
    out = []
    for i in range(len(x)):
        best, best_d = NO_LEADER, math.inf
        for j in range(len(x)):
            if j != i and y_lane[j] == y_lane[i] and x[j] > x[i] and x[j] - x[i] < best_d:
                best, best_d = j, x[j] - x[i]
        if ego_x > x[i] and abs(ego_y_offset[i]) < coop[i] and ego_x - x[i] <= best_d:
            best = EGO_LEADER
        out.append(best)
    return np.array(out)


def random_config(rng):
    n = int(rng.integers(1, 12))
    x = rng.uniform(-60, 60, n)
    y_lane = rng.choice([0.0, 4.0], n)
    coop = rng.uniform(0, 4, n)
    ego_x = rng.uniform(-60, 60)
    ego_y, ego_pred = rng.uniform(-6, 6), rng.uniform(-6, 6)
    return x, y_lane, coop, ego_x, ego_y, ego_pred


def test_criterion_4_pidm_properties(capsys):
    rng = np.random.default_rng(2024)
    fails = {"monotone": 0, "plain_idm": 0, "equilibrium": 0, "gating": 0}
    worst_eq = 0.0
    for _ in range(1000):
        x, y_lane, coop, ego_x, ego_y, ego_pred = random_config(rng)
        base = select_leaders(x, y_lane, 1, coop, ego_x, ego_pred)

        # enlarging every coefficient only adds the ego as a candidate
        wider = select_leaders(x, y_lane, 1, coop + rng.uniform(0, 2, len(x)), ego_x, ego_pred)
        kept = np.all(wider[base == EGO_LEADER] == EGO_LEADER)
        same = np.all((wider == EGO_LEADER) | (wider == base))
        fails["monotone"] += not (kept and same)

        # prediction replaced by the current lateral position is plain IDM
        plain = select_leaders(x, y_lane, 1, coop, ego_x, ego_y)
        fails["plain_idm"] += not np.array_equal(plain, leaders_oracle(x, y_lane, coop, ego_x,
                                                                       ego_y - y_lane))
        fails["gating"] += not np.array_equal(base, leaders_oracle(x, y_lane, coop, ego_x,
                                                                   ego_pred - y_lane))

        # a lone vehicle with the ego just ahead follows it exactly when gated in
        lone = select_leaders(x[:1], np.zeros(1), 1, coop[:1], x[0] + 10.0, ego_pred)
        fails["gating"] += (lone[0] == EGO_LEADER) != (abs(ego_pred) < coop[0])

        p = IdmParams(a_max=rng.uniform(1, 4), v_star=rng.uniform(1, 15), s0=rng.uniform(1, 3),
                      T_hw=rng.uniform(0.5, 2), b_comf=rng.uniform(1, 3))
        acc = idm_accelerations(np.array([p.v_star]), p.v_star, p.a_max, p.s0, p.T_hw, p.b_comf,
                                np.array([1.0]), np.array([0.0]), np.array([False]))[0]
        err = max(abs(acc), abs(idm_acceleration(p.v_star, p)))
        worst_eq = max(worst_eq, err)
        fails["equilibrium"] += err > 1e-9
    fails = {k: int(v) for k, v in fails.items()}
    ok = not any(fails.values())
    verdict(capsys, 4, ok, f"1000 configs, failures {fails}, worst free-road accel {worst_eq:.1e}")


# ------------------------------------------------------------ 5

def test_criterion_5_solver(capsys):
    rng = np.random.default_rng(5)
    worst_grad = 0.0
    for i in range(100):
        p, u = random_point(rng, with_obstacle=i % 2 == 0)
        _, g, _, jc = shooting_terms(p, u)
        fd_g = central_difference(lambda v: shooting_terms(p, v, False)[0], u)
        fd_j = central_difference(lambda v: shooting_terms(p, v, False)[2], u)
        worst_grad = max(worst_grad, relative_error(g, fd_g), relative_error(jc, fd_j))

    worst_convex = 0.0
    for _ in range(20):
        p = convex_instance(rng)
        sol = solve(p)
        ref = convex_oracle(p)
        worst_convex = max(worst_convex, abs(sol.cost - ref) / max(1.0, abs(ref)))

    feasible, margins_ok, worst_ratio = 0, True, 0.0
    for _ in range(20):
        p = obstacle_instance(rng)
        sol = solve(p)
        if sol.status != SolveStatus.FEASIBLE:
            continue
        feasible += 1
        for k in range(1, H + 1):
            s = VehicleState(*sol.states[k])
            for d in range(len(p.discs.offsets)):
                margins_ok &= collision_margin(s, d, p.obstacles[0], k, p.discs) > 1.0
        cost, _ = trajectory_cost(p, sol.controls)
        worst_ratio = max(worst_ratio, cost / grid_oracle(p))
    ok = (worst_grad < 1e-4 and worst_convex < 1e-6 and feasible == 20 and margins_ok
          and worst_ratio <= 1.05)
    verdict(capsys, 5, ok, f"(a) worst FD rel err {worst_grad:.1e}; (b) worst cost gap "
            f"{worst_convex:.1e}; (c) {feasible}/20 feasible, margins>1 {margins_ok}, "
            f"worst cost/grid {worst_ratio:.3f}")


# ------------------------------------------------------------ 6

def scalar_log_prob(z, mu, log_std):
    s = math.exp(log_std)
    gauss = -0.5 * ((z - mu) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
    return gauss - math.log(1 - math.tanh(z) ** 2)


def test_criterion_6_sac(capsys):
    obs_dim = 4
    agent = SacAgent(obs_dim, SacConfig(hidden=(32, 32), batch_size=32, lr=1e-3), seed=0)
    buf = ReplayBuffer(10, obs_dim)
    obs = np.array([0.2, -0.1, 0.5, 0.0])
    buf.add(Transition(obs, 0.3, 2.5, np.zeros(obs_dim), True))
    rng = np.random.default_rng(0)
    for _ in range(5000):
        agent.update(buf.sample(32, rng), rng)
    x = np.concatenate([obs, [math.tanh(0.3)]])
    q_err = max(abs(agent.q1(x)[0] - 2.5), abs(agent.q2(x)[0] - 2.5))

    grid = np.random.default_rng(6)
    lp_err = max(abs(squashed_log_prob(z, mu, ls) - scalar_log_prob(z, mu, ls))
                 for z, mu, ls in zip(grid.uniform(-4, 4, 1000), grid.uniform(-3, 3, 1000),
                                      grid.uniform(-3, 1.5, 1000)))

    spread = SacAgent(obs_dim, SacConfig(hidden=(32, 32), batch_size=32, target_entropy=-1.0),
                      seed=0)
    spread.policy.W[-1][...] = 0.0
    spread.policy.b[-1][...] = [0.0, -0.3]
    batch = ReplayBuffer(100, obs_dim)
    for _ in range(64):
        batch.add(Transition(rng.normal(size=obs_dim), rng.normal(), 0.0,
                             rng.normal(size=obs_dim), False))
    alpha0 = spread.alpha
    rep = sac_update(spread, batch, rng)
    ok = q_err < 1e-3 and lp_err < 1e-9 and rep.entropy > -1.0 and spread.alpha < alpha0
    verdict(capsys, 6, ok, f"terminal Q err {q_err:.1e}; log-prob err {lp_err:.1e}; entropy "
            f"{rep.entropy:.2f} > -1 gives alpha {alpha0:.4f} -> {spread.alpha:.4f}")


# ------------------------------------------------------------ 7

def test_criterion_7_k_ablation(policy_k2, policy_k4, capsys):
    k2 = evaluate(intmpc(policy_k2[0]), coop="noncooperative", n=N_ORDERING)
    k4 = evaluate(intmpc(policy_k4[0]), coop="noncooperative", n=N_ORDERING)
    s2, s4 = k2.rate("success"), k4.rate("success")
    verdict(capsys, 7, s2 >= s4 + 10.0,
            f"noncooperative success K=2 {s2:.1f}% vs K=4 {s4:.1f}% (needs +10)")


# ------------------------------------------------------------ 8

def test_criterion_8_statistics(closed_loop, capsys):
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(50):
        a = np.round(rng.normal(0, 1, rng.integers(1, 60)), 1)
        b = np.round(rng.normal(0.3, 1, rng.integers(1, 60)), 1)
        u = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in a for q in b)
        mismatches += rank_sum_test(a, b)[0] != u

    reports, _ = closed_loop
    ttg_ok = True
    for setting in SETTINGS:
        pair = [reports["intmpc", setting], reports["mpcc", setting]]
        joint = pair[0].successful_seeds() & pair[1].successful_seeds()
        table = comparison_table(pair)
        col_n, col_mean = table.header.index("ttg_n"), table.header.index("ttg_mean")
        for row, rep in zip(table.rows, pair):
            times = [e.time_to_goal for e in rep.episodes if e.seed in joint]
            ttg_ok &= row[col_n] == len(joint)
            if joint:
                ttg_ok &= abs(row[col_mean] - float(np.mean(times))) < 1e-9
    ok = mismatches == 0 and ttg_ok
    verdict(capsys, 8, ok, f"rank-sum U mismatches {mismatches}/50; joint time-to-goal {ttg_ok}")


# ------------------------------------------------------------ 9

def test_criterion_9_cli_determinism(policy_k2, tmp_path, capsys):
    ckpt = tmp_path / "k2.bin"
    save_checkpoint(policy_k2[0], ckpt)
    runs = []
    for d in ("a", "b"):
        out = tmp_path / d
        assert cli_main(["evaluate", "--method", "intmpc", "mpcc", "--checkpoint", str(ckpt),
                         "--setting", "all", "--n", "3", "--seed", "11", "--out", str(out)]) == 0
        assert cli_main(["ablate", "weights", "--n", "1", "--seed", "11",
                         "--out", str(out / "weights")]) == 0
        runs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*.csv"))})
    ok = len(runs[0]) > 0 and runs[0] == runs[1]
    verdict(capsys, 9, ok, f"{len(runs[0])} CSV files byte-identical across two runs: {ok}")
