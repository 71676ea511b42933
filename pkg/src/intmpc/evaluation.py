"""Paired evaluation of the planners and the tables built from it.

All methods are run on the same scenario seeds (``seed, seed + 1, ...``),
so per-seed outcomes can be compared directly. Episodes are independent;
with ``pool > 1`` they run in worker processes and are reassembled in seed
order, so a report never depends on the pool size.
"""
from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .config import CoopSetting, MpccConfig, PredictionModel, ScenarioConfig, ScenarioKind
from .env import LOW_LEVEL_MPCC, LOW_LEVEL_TRACKING, DrivingEnv
from .guidance.policy import sample_action
from .nn import Checkpoint
from .traffic.trace import write_trace
from .traffic.world import OutcomeKind

BASELINE_V_REF = 2.0
BASELINE_Q_V = 1.0
OUTCOMES = (OutcomeKind.SUCCESS.value, OutcomeKind.COLLISION.value, OutcomeKind.TIMEOUT.value)


class MissingCheckpoint(ValueError):
    pass


class EmptySample(ValueError):
    pass


class Method(str, Enum):
    INTMPC = "intmpc"
    MPCC = "mpcc"
    DRL = "drl"


@dataclass
class MethodUnderTest:
    kind: Method
    checkpoint: Checkpoint | None = None
    v_ref: float = BASELINE_V_REF     # fixed reference, MPCC baseline only
    q_v: float | None = None          # overrides the config's speed weight

    def __post_init__(self):
        self.kind = Method(self.kind)
        if self.kind in (Method.INTMPC, Method.DRL) and self.checkpoint is None:
            raise MissingCheckpoint(f"method {self.kind.value} needs a policy checkpoint")

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def constrained(self) -> bool:
        return self.kind != Method.DRL

    @property
    def K(self) -> int:
        """Query period at test time: every policy is queried each control cycle."""
        return 1

    @property
    def trained_K(self) -> int | None:
        if self.checkpoint is None:
            return None
        return int(self.checkpoint.scalars.get("K", 1))

    def env(self, scenario: ScenarioConfig, mpcc: MpccConfig, record_trace=False) -> DrivingEnv:
        if self.q_v is not None:
            mpcc = dataclasses.replace(mpcc, q_v=self.q_v)
        elif self.kind == Method.MPCC:
            mpcc = dataclasses.replace(mpcc, q_v=BASELINE_Q_V)
        low = LOW_LEVEL_TRACKING if self.kind == Method.DRL else LOW_LEVEL_MPCC
        return DrivingEnv(scenario, mpcc, K=self.K, collision=self.constrained,
                          low_level=low, record_trace=record_trace)

    def action(self, obs) -> float:
        if self.kind == Method.MPCC:
            return self.v_ref
        ck = self.checkpoint
        v_ref, _, _ = sample_action(ck.nets["policy"], obs, None, deterministic=True,
                                    v_ref_max=ck.scalars.get("v_ref_max", 5.0))
        return float(v_ref)


def intmpc(checkpoint: Checkpoint) -> MethodUnderTest:
    return MethodUnderTest(Method.INTMPC, checkpoint)


def mpcc_baseline(v_ref: float = BASELINE_V_REF, q_v: float = BASELINE_Q_V) -> MethodUnderTest:
    return MethodUnderTest(Method.MPCC, v_ref=v_ref, q_v=q_v)


def drl(checkpoint: Checkpoint) -> MethodUnderTest:
    return MethodUnderTest(Method.DRL, checkpoint)


@dataclass
class EpisodeRecord:
    seed: int
    outcome: str
    time_to_goal: float | None
    steps: int
    infeasible: int
    collided_while_feasible: bool
    merge_follower_coop: float | None
    mean_v_ref: float

    @property
    def braking(self) -> bool:
        """At least one cycle fell back to braking."""
        return self.infeasible > 0


def run_episode(method: MethodUnderTest, scenario: ScenarioConfig, seed: int,
                mpcc: MpccConfig = MpccConfig(), record_trace: bool = False):
    """One closed-loop episode; returns ``(EpisodeRecord, trace records)``."""
    env = method.env(scenario, mpcc, record_trace)
    obs = env.reset(seed)
    while not env.done:
        obs, _, _, stats = env.step(method.action(obs))
    st = env.stats
    rec = EpisodeRecord(
        seed=int(seed), outcome=env.outcome.kind.value, time_to_goal=env.outcome.time_to_goal,
        steps=st.steps, infeasible=st.infeasible,
        collided_while_feasible=st.collided_while_feasible,
        merge_follower_coop=st.merge_follower_coop,
        mean_v_ref=float(np.mean(st.v_refs)) if st.v_refs else 0.0)
    return rec, env.trace


@dataclass
class EvalReport:
    method: str
    scenario: str
    coop_setting: str
    episodes: list = field(default_factory=list)
    timeout: float = 60.0

    @property
    def n(self) -> int:
        return len(self.episodes)

    @property
    def counts(self) -> dict:
        c = {k: 0 for k in OUTCOMES}
        for e in self.episodes:
            c[e.outcome] += 1
        return c

    @property
    def percentages(self) -> dict:
        n = self.n
        return {k: 100.0 * v / n for k, v in self.counts.items()} if n else {k: 0.0 for k in OUTCOMES}

    def rate(self, outcome: str) -> float:
        return self.percentages[outcome]

    @property
    def infeasible(self) -> int:
        return sum(e.infeasible for e in self.episodes)

    @property
    def braking_episodes(self) -> list:
        return [e for e in self.episodes if e.braking]

    def time_to_goal(self, seeds=None) -> tuple[float, float, int]:
        """Mean, std and count over Success episodes (restricted to ``seeds``)."""
        vals = [e.time_to_goal for e in self.episodes
                if e.outcome == OutcomeKind.SUCCESS.value and (seeds is None or e.seed in seeds)]
        if not vals:
            return math.nan, math.nan, 0
        return float(np.mean(vals)), float(np.std(vals)), len(vals)

    def successful_seeds(self) -> set:
        return {e.seed for e in self.episodes if e.outcome == OutcomeKind.SUCCESS.value}

    def invariant_violations(self, constrained: bool = True) -> list[str]:
        errs = []
        if sum(self.counts.values()) != self.n:
            errs.append("outcome counts do not sum to n")
        if self.n and abs(sum(self.percentages.values()) - 100.0) > 1e-9:
            errs.append("percentages do not sum to 100")
        for e in self.episodes:
            if e.outcome == OutcomeKind.SUCCESS.value and not (
                    e.time_to_goal is not None and e.time_to_goal <= self.timeout + 1e-9):
                errs.append(f"seed {e.seed}: time-to-goal exceeds the timeout")
            if constrained and e.collided_while_feasible:
                errs.append(f"seed {e.seed}: collision while every solve was feasible")
        return errs


def _run(args):
    method, scenario, seed, mpcc, trace_dir = args
    rec, trace = run_episode(method, scenario, seed, mpcc, record_trace=trace_dir is not None)
    if trace_dir is not None:
        write_trace(Path(trace_dir) / f"{method.name}_{scenario.coop_setting.value}_{seed}.jsonl",
                    trace, meta={"method": method.name, "scenario": scenario.kind.value,
                                 "coop_setting": scenario.coop_setting.value, "seed": seed,
                                 "outcome": rec.outcome})
    return rec


def evaluate(method: MethodUnderTest, kind=ScenarioKind.RAMP_MERGE, coop=CoopSetting.MIXED,
             n: int = 100, seed: int = 0, scenario: ScenarioConfig | None = None,
             mpcc: MpccConfig = MpccConfig(), trace_dir=None, pool: int = 1,
             prediction_model=None) -> EvalReport:
    """Evaluate ``method`` on seeds ``seed .. seed + n - 1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    scenario = dataclasses.replace(scenario or ScenarioConfig(), kind=ScenarioKind(kind),
                                   coop_setting=CoopSetting(coop))
    if prediction_model is not None:
        scenario = dataclasses.replace(scenario, prediction_model=PredictionModel(prediction_model))
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(method, scenario, seed + i, mpcc, trace_dir) for i in range(n)]
    if pool > 1:
        with get_context("spawn").Pool(pool) as p:
            records = p.map(_run, jobs)
    else:
        records = [_run(j) for j in jobs]
    records.sort(key=lambda r: r.seed)
    return EvalReport(method.name, scenario.kind.value, scenario.coop_setting.value, records,
                      timeout=scenario.timeout)


def joint_time_to_goal(reports: list) -> dict:
    """Time-to-goal statistics restricted to seeds every report solved."""
    if not reports:
        return {}
    joint = set.intersection(*(r.successful_seeds() for r in reports))
    return {r.method: r.time_to_goal(joint) for r in reports}


def rank_sum_test(samples_a, samples_b) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test with tie and continuity correction.

    Returns the U statistic of ``samples_a`` (the number of pairs where the
    ``a`` value is larger, ties counting one half) and the normal
    approximation p-value.
    """
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    n1, n2 = a.size, b.size
    allv = np.concatenate([a, b])
    order = np.argsort(allv, kind="stable")
    ranks = np.empty(allv.size)
    sv = allv[order]
    i = 0
    tie_term = 0.0
    while i < sv.size:
        j = i
        while j + 1 < sv.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        t = j - i + 1
        tie_term += t**3 - t
        i = j + 1
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    mean = n1 * n2 / 2.0
    n = n1 + n2
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0.0:
        return u, 1.0
    z = (abs(u - mean) - 0.5) / math.sqrt(var)
    p = math.erfc(max(z, 0.0) / math.sqrt(2.0))
    return u, min(1.0, p)


def coop_histogram(episodes, width: float = 0.5, lo: float = 0.0, hi: float = 4.0):
    """Histogram of the cooperation of the vehicle the ego merged in front of.

    Only successful episodes with a follower count. Returns ``(edges, counts)``.
    """
    edges = np.round(np.arange(lo, hi + 0.5 * width, width), 12)
    vals = [e.merge_follower_coop for e in episodes
            if e.outcome == OutcomeKind.SUCCESS.value and e.merge_follower_coop is not None]
    counts = np.zeros(len(edges) - 1, dtype=int)
    for c in vals:
        k = int(math.floor((c - lo) / width + 1e-12))
        counts[min(max(k, 0), len(counts) - 1)] += 1
    return edges, counts


# ---------------------------------------------------------------- tables

@dataclass
class Table:
    title: str
    header: list
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.header) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [list(self.header)] + [[_fmt(v) for v in r] for r in self.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.header))]
        lines = [self.title]
        for k, r in enumerate(cells):
            lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
            if k == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def write(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        csv_path = stem.with_suffix(".csv")
        txt_path = stem.with_suffix(".txt")
        csv_path.write_text(self.to_csv())
        txt_path.write_text(self.to_text())
        return csv_path, txt_path


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.2f}"
    return str(v)


def report_row(report: EvalReport, seeds=None) -> list:
    """Outcome percentages and time-to-goal, the latter restricted to ``seeds`` if given."""
    p = report.percentages
    mean, std, count = report.time_to_goal(seeds)
    return [p["success"], p["collision"], p["timeout"], report.n, report.infeasible,
            mean, std, count]


REPORT_COLUMNS = ["success_pct", "collision_pct", "timeout_pct", "n", "infeasible",
                  "ttg_mean", "ttg_std", "ttg_n"]

WEIGHT_Q_V = (0.1, 1.0, 10.0)
WEIGHT_V_REF = (2.0, 3.0, 4.0)
K_VALUES = (1, 2, 3, 4)
PREDICTION_MODELS = (PredictionModel.IDM, PredictionModel.CV, PredictionModel.CV_PATH,
                     PredictionModel.MPCC)
SETTINGS = (CoopSetting.COOPERATIVE, CoopSetting.MIXED, CoopSetting.NON_COOPERATIVE)


def ablate_weights(kind=ScenarioKind.RAMP_MERGE, coop=CoopSetting.MIXED, n=100, seed=0,
                   q_values=WEIGHT_Q_V, v_refs=WEIGHT_V_REF, **kw) -> Table:
    """Fixed-reference planner over the speed-weight x reference-speed grid."""
    rows = []
    for q_v in q_values:
        for v_ref in v_refs:
            rep = evaluate(mpcc_baseline(v_ref, q_v), kind, coop, n, seed, **kw)
            rows.append([q_v, v_ref] + report_row(rep))
    return Table(f"speed weight x reference speed ({CoopSetting(coop).value})",
                 ["q_v", "v_ref"] + REPORT_COLUMNS, rows)


def ablate_k(checkpoints: dict, kind=ScenarioKind.RAMP_MERGE, n=100, seed=0,
             settings=SETTINGS, **kw) -> Table:
    """Policies trained with different query periods K, per cooperation setting."""
    rows = []
    for K in sorted(checkpoints):
        for coop in settings:
            rep = evaluate(intmpc(checkpoints[K]), kind, coop, n, seed, **kw)
            rows.append([K, CoopSetting(coop).value] + report_row(rep))
    return Table("policy query period K", ["K", "setting"] + REPORT_COLUMNS, rows)


def ablate_prediction(checkpoint: Checkpoint, kind=ScenarioKind.RAMP_MERGE,
                      coop=CoopSetting.MIXED, n=100, seed=0, models=PREDICTION_MODELS,
                      **kw) -> Table:
    """One policy evaluated against traffic using different ego-prediction models."""
    rows = []
    for model in models:
        rep = evaluate(intmpc(checkpoint), kind, coop, n, seed, prediction_model=model, **kw)
        rows.append([PredictionModel(model).value] + report_row(rep))
    return Table(f"traffic prediction model ({CoopSetting(coop).value})",
                 ["prediction_model"] + REPORT_COLUMNS, rows)


def comparison_table(reports: list) -> Table:
    """One row per report; time-to-goal only over seeds every method solved in that setting."""
    joint = {}
    for r in reports:
        key = (r.scenario, r.coop_setting)
        joint[key] = joint.get(key, r.successful_seeds()) & r.successful_seeds()
    rows = [[r.method, r.coop_setting] + report_row(r, joint[(r.scenario, r.coop_setting)])
            for r in reports]
    return Table("method comparison", ["method", "setting"] + REPORT_COLUMNS, rows)


def episodes_table(report: EvalReport) -> Table:
    rows = [[e.seed, e.outcome, math.nan if e.time_to_goal is None else float(e.time_to_goal),
             e.steps, e.infeasible, int(e.collided_while_feasible),
             math.nan if e.merge_follower_coop is None else float(e.merge_follower_coop),
             e.mean_v_ref] for e in report.episodes]
    return Table(f"{report.method} {report.scenario} {report.coop_setting}",
                 ["seed", "outcome", "time_to_goal", "steps", "infeasible",
                  "collided_while_feasible", "merge_follower_coop", "mean_v_ref"], rows)
