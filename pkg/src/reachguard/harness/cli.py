"""Command line entry point: ``reachguard {run,sweep,table1,table2,timing,soundness}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from ..config import ConfigError, ExperimentConfig
from . import experiments as ex
from .metrics import compute_metrics, reports_to_csv, write_csv, write_plot_data
from .soundness import run_soundness

log = logging.getLogger("reachguard")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"override must be key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k.strip(), json.loads(v)
    except json.JSONDecodeError:
        return k.strip(), v


def build_config(args, default: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else (default or ExperimentConfig()).with_env()
    kw = dict(args.set or [])
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.repeats is not None:
        kw["repeats"] = args.repeats
    if getattr(args, "duration", None) is not None:
        kw["duration"] = args.duration
    if kw:
        d = cfg.to_dict()
        unknown = set(kw) - set(d)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d.update(kw)
        cfg = ExperimentConfig.from_dict(d)
    return cfg


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_run(args) -> int:
    cfg = build_config(args)
    out = _outdir(args)
    logs = ex.run_repeats(cfg, args.workers, out)
    for lg in logs:
        lg.write(os.path.join(out, f"episode_seed{lg.seed}.jsonl"))
    rep = compute_metrics(logs, cfg.t_runtime)
    with open(os.path.join(out, "metrics.csv"), "w") as fh:
        fh.write(reports_to_csv([rep]))
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(rep.as_row(), fh, indent=2, sort_keys=True)
    cfg.save(os.path.join(out, "config.json"))
    print(f"{rep.episodes} episodes, {rep.periods} periods: safe actions {rep.safe_action_pct:.2f}%, "
          f"collisions {rep.collision_frequency_pct:.1f}%, complex usage {rep.complex_usage_pct:.1f}%")
    return 0


def _table(args, simplex: bool) -> int:
    base = build_config(args, ExperimentConfig(table_preset=True))
    out = _outdir(args)
    speeds = args.speeds or list(ex.TABLE_SPEEDS)
    rows = ex.safety_table(base, simplex, speeds=speeds, workers=args.workers, workdir=out)
    name = "table2" if simplex else "table1"
    body = ex.safety_table_rows(rows)
    path = os.path.join(out, f"{name}.csv")
    write_csv(path, ex.SAFETY_TABLE_HEADER, body)
    print(f"wrote {path}")
    failed = sum(1 for r in body if r[-1])
    if failed:
        print(f"{failed} rows had failing cells", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    base = build_config(args, ex.sweep_base())
    out = _outdir(args)
    pcts = args.pcts or list(ex.SWEEP_PCTS)
    gt = ex.run_uncertainty_sweep(base, pcts, "ground_truth", args.workers, out)
    pf = ex.run_uncertainty_sweep(base, pcts, "inflated", args.workers, out) if not args.ground_truth_only else None
    rows = []
    for i, p in enumerate(pcts):
        row = [p, gt[i][1], gt[i][2]]
        row += [pf[i][1], pf[i][2]] if pf else ["", ""]
        rows.append(row)
    write_csv(os.path.join(out, "sweep.csv"), ex.SWEEP_HEADER, rows)
    write_plot_data(os.path.join(out, "sweep.dat"), ex.SWEEP_HEADER,
                    [[("nan" if v == "" else v) for v in r] for r in rows])
    print(f"wrote {os.path.join(out, 'sweep.csv')}")
    errors = [r[4] for r in gt + (pf or []) if r[4]]
    for e in errors:
        print(e.splitlines()[0], file=sys.stderr)
    return 1 if errors else 0


def cmd_timing(args) -> int:
    base = build_config(args, ex.timing_base())
    out = _outdir(args)
    cells = ex.timing_grid(base, args.runtime_ms or [10.0, 25.0], args.speeds or [0.5, 1.0], workdir=out)
    rows = ex.timing_rows(cells)
    path = os.path.join(out, "timing.csv")
    write_csv(path, ex.TIMING_HEADER, rows)
    print(f"wrote {path}")
    return 1 if any(r[-1] for r in rows) else 0


def cmd_soundness(args) -> int:
    rep = run_soundness(n_queries=args.queries, n_traj=args.trajectories, seed=args.seed or 0)
    print(f"{rep.queries} queries, {rep.samples} samples, {rep.violations} violations, "
          f"{rep.elapsed:.1f} s")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "soundness.json"), "w") as fh:
            json.dump({"queries": rep.queries, "samples": rep.samples, "violations": rep.violations,
                       "elapsed_s": rep.elapsed, "worst_excess": rep.worst_excess,
                       "examples": rep.examples}, fh, indent=2)
    return 0 if rep.ok else 1


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reachguard", description="Runtime reachability safety experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", help="JSON file mirroring ExperimentConfig")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--repeats", type=int)
        sp.add_argument("--duration", type=float, help="episode length in seconds")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", default=out_default)
        sp.add_argument("--set", action="append", type=_override, metavar="KEY=VALUE",
                        help="override any config field (value parsed as JSON when possible)")

    sp = sub.add_parser("run", help="run one configuration")
    common(sp, "out/run")
    sp.set_defaults(fn=cmd_run)
    for name, simplex in (("table1", False), ("table2", True)):
        sp = sub.add_parser(name, help=f"safety grid with simplex {'on' if simplex else 'off'}")
        common(sp, f"out/{name}")
        sp.add_argument("--speeds", type=_floats)
        sp.set_defaults(fn=lambda a, s=simplex: _table(a, s))
    sp = sub.add_parser("sweep", help="parameter-uncertainty sweep")
    common(sp, "out/sweep")
    sp.add_argument("--pcts", type=_floats)
    sp.add_argument("--ground-truth-only", action="store_true")
    sp.set_defaults(fn=cmd_sweep)
    sp = sub.add_parser("timing", help="wall-clock timing grid")
    common(sp, "out/timing")
    sp.add_argument("--runtime-ms", type=_floats)
    sp.add_argument("--speeds", type=_floats)
    sp.set_defaults(fn=cmd_timing)
    sp = sub.add_parser("soundness", help="sampled-trajectory soundness corpus")
    sp.add_argument("--queries", type=int, default=1000)
    sp.add_argument("--trajectories", type=int, default=100)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_soundness)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
