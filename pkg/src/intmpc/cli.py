"""Command-line entry point: ``intmpc {train,evaluate,rollout,ablate,plot}``.

Exit codes: 0 success, 1 an evaluation invariant was violated, 2 usage or
input errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, CoopSetting, ScenarioKind, TrainConfig, load_yaml
from .evaluation import (SETTINGS, Method, MethodUnderTest, MissingCheckpoint, ablate_k,
                         ablate_prediction, ablate_weights, comparison_table, coop_histogram,
                         episodes_table, evaluate, run_episode)
from .nn import load_checkpoint, save_checkpoint
from .traffic.trace import write_trace

EXIT_INVARIANT = 1
EXIT_USAGE = 2


def _config(args) -> TrainConfig:
    cfg = load_yaml(args.config, TrainConfig) if args.config else TrainConfig()
    scen = cfg.scenario
    if getattr(args, "scenario", None):
        scen = dataclasses.replace(scen, kind=ScenarioKind(args.scenario))
    if getattr(args, "setting", None) and args.setting != "all":
        scen = dataclasses.replace(scen, coop_setting=CoopSetting(args.setting))
    return dataclasses.replace(cfg, scenario=scen)


def _method(name, args) -> MethodUnderTest:
    kind = Method(name)
    ckpt = None
    if kind == Method.INTMPC and args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
    if kind == Method.DRL and args.drl_checkpoint:
        ckpt = load_checkpoint(args.drl_checkpoint)
    if kind == Method.MPCC:
        return MethodUnderTest(kind, v_ref=args.v_ref, q_v=args.q_v)
    return MethodUnderTest(kind, ckpt)


def _settings(args):
    return list(SETTINGS) if args.setting == "all" else [CoopSetting(args.setting)]


def cmd_train(args) -> int:
    from .guidance.train import train

    cfg = _config(args)
    over = {}
    for key in ("n_episodes", "K", "seed", "n_workers", "method"):
        val = getattr(args, key)
        if val is not None:
            over[key] = val
    cfg = dataclasses.replace(cfg, **over)

    def progress(rec):
        if args.verbose:
            print(json.dumps(rec), flush=True)

    res = train(cfg, log_path=args.log, progress=progress)
    save_checkpoint(res.checkpoint, args.out)
    print(f"trained {cfg.n_episodes} episodes, {res.updates} updates -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    names = [m.value for m in Method] if args.method == ["all"] else args.method
    methods = [_method(n, args) for n in names]
    out = Path(args.out) if args.out else None
    reports, errors = [], []
    for coop in _settings(args):
        per = {}
        for m in methods:
            rep = evaluate(m, cfg.scenario.kind, coop, args.n, args.seed, cfg.scenario, cfg.mpcc,
                           trace_dir=args.traces, pool=args.pool)
            per[m.name] = rep
            reports.append(rep)
            errors += [f"{m.name}/{coop.value}: {e}"
                       for e in rep.invariant_violations(constrained=m.constrained)]
            if out is not None:
                episodes_table(rep).write(out / f"episodes_{m.name}_{coop.value}")
        a, b = per.get("intmpc"), per.get("mpcc")
        if a is not None and b is not None and coop == CoopSetting.MIXED and args.n >= 100:
            if a.infeasible > b.infeasible:
                errors.append(f"mixed: intmpc infeasible count {a.infeasible} > baseline {b.infeasible}")
    table = comparison_table(reports)
    print(table.to_text(), end="")
    if out is not None:
        table.write(out / "comparison")
        succ = [e for r in reports if r.method == "intmpc" for e in r.episodes]
        if succ:
            edges, counts = coop_histogram(succ)
            with open(out / "coop_histogram.csv", "w") as fh:
                fh.write("bin_lo,bin_hi,count\n")
                for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                    fh.write(f"{lo:.2f},{hi:.2f},{c}\n")
    for e in errors:
        print(f"INVARIANT VIOLATION: {e}", file=sys.stderr)
    return EXIT_INVARIANT if errors else 0


def cmd_rollout(args) -> int:
    cfg = _config(args)
    m = _method(args.method, args)
    rec, trace = run_episode(m, cfg.scenario, args.seed, cfg.mpcc, record_trace=True)
    write_trace(args.out, trace, meta={"method": m.name, "scenario": cfg.scenario.kind.value,
                                       "coop_setting": cfg.scenario.coop_setting.value,
                                       "seed": args.seed, "outcome": rec.outcome})
    print(f"{rec.outcome} after {rec.steps} cycles -> {args.out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    kw = dict(scenario=cfg.scenario, mpcc=cfg.mpcc, pool=args.pool)
    coop = CoopSetting(args.setting if args.setting != "all" else "mixed")
    if args.grid == "weights":
        table = ablate_weights(cfg.scenario.kind, coop, args.n, args.seed, **kw)
    elif args.grid == "k":
        if not args.k_checkpoint:
            raise MissingCheckpoint("--k-checkpoint K=PATH is required for the K grid")
        ckpts = {}
        for item in args.k_checkpoint:
            k, _, path = item.partition("=")
            ckpts[int(k)] = load_checkpoint(path)
        table = ablate_k(ckpts, cfg.scenario.kind, args.n, args.seed, **kw)
    else:
        if not args.checkpoint:
            raise MissingCheckpoint("--checkpoint is required for the prediction grid")
        table = ablate_prediction(load_checkpoint(args.checkpoint), cfg.scenario.kind, coop,
                                  args.n, args.seed, **kw)
    csv_path, _ = table.write(args.out)
    print(table.to_text(), end="")
    print(f"-> {csv_path}")
    return 0


def cmd_plot(args) -> int:
    from .plotting import plot_outcomes

    path = plot_outcomes(args.csv, args.out, args.title)
    print(f"-> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intmpc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, setting_all=False):
        sp.add_argument("--config", help="YAML training/scenario config")
        sp.add_argument("--scenario", choices=[k.value for k in ScenarioKind])
        choices = [c.value for c in CoopSetting] + (["all"] if setting_all else [])
        sp.add_argument("--setting", choices=choices, default="mixed")
        sp.add_argument("--seed", type=int, default=0)

    def methods(sp):
        sp.add_argument("--checkpoint", help="IntMPC policy checkpoint")
        sp.add_argument("--drl-checkpoint", help="DRL baseline policy checkpoint")
        sp.add_argument("--v-ref", type=float, default=2.0, help="MPCC baseline reference")
        sp.add_argument("--q-v", type=float, default=1.0, help="MPCC baseline speed weight")

    sp = sub.add_parser("train", help="train a velocity-reference policy")
    common(sp)
    sp.add_argument("--episodes", dest="n_episodes", type=int)
    sp.add_argument("--K", type=int)
    sp.add_argument("--workers", dest="n_workers", type=int)
    sp.add_argument("--method", choices=["intmpc", "drl"])
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--log", help="JSONL training log path")
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_train, seed=None)

    sp = sub.add_parser("evaluate", help="paired evaluation of one or more methods")
    common(sp, setting_all=True)
    methods(sp)
    sp.add_argument("--method", nargs="+", default=["mpcc"],
                    choices=[m.value for m in Method] + ["all"])
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--out", help="directory for CSV/text tables")
    sp.add_argument("--traces", help="directory for per-episode JSONL traces")
    sp.add_argument("--pool", type=int, default=1)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("rollout", help="dump one episode trace")
    common(sp)
    methods(sp)
    sp.add_argument("--method", default="mpcc", choices=[m.value for m in Method])
    sp.add_argument("--out", required=True, help="JSONL trace path")
    sp.set_defaults(func=cmd_rollout)

    sp = sub.add_parser("ablate", help="run an ablation grid")
    common(sp)
    sp.add_argument("grid", choices=["weights", "k", "prediction"])
    sp.add_argument("--checkpoint", help="policy for the prediction grid")
    sp.add_argument("--k-checkpoint", action="append", metavar="K=PATH")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--pool", type=int, default=1)
    sp.add_argument("--out", required=True, help="output stem; .csv and .txt are written")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("plot", help="render an outcome table CSV as SVG")
    sp.add_argument("csv")
    sp.add_argument("--out", required=True)
    sp.add_argument("--title")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MissingCheckpoint, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
