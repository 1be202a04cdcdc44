"""Experiment grids: repeated episodes, safety tables, uncertainty sweeps and timing."""

from __future__ import annotations

import logging
import os
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from ..config import ExperimentConfig
from ..control import write_replay_log
from ..model import ControlAction
from ..sim.episode import EpisodeLog, run_episode
from .metrics import MetricsReport, compute_metrics

log = logging.getLogger(__name__)

TABLE_CONTROLLERS = ("disparity_extender", "pure_pursuit", "replay")
TABLE_OPPONENTS = (2, 3)
TABLE_SPEEDS = (0.5, 1.0, 1.5)
SWEEP_PCTS = tuple(range(0, 50, 5))
# inflated-localization variant: radii scaled up and the estimate noisy
PF_INFLATION = (0.15, 0.15, 0.0, 0.1)


def episode_seeds(cfg: ExperimentConfig) -> list[int]:
    return [cfg.seed + i for i in range(cfg.repeats)]


def _run_one(args):
    cfg, seed = args
    return run_episode(cfg, seed=seed)


def record_replay_log(cfg: ExperimentConfig, directory: Optional[str] = None) -> str:
    """Record a clean pure-pursuit drive (no simplex, obstacles or opponents) for replay."""
    rec_cfg = cfg.replace(controller="pure_pursuit", simplex=False, obstacles="none", opponents=0,
                          stop_on_collision=False, repeats=1, replay_log=None)
    ep = run_episode(rec_cfg)
    directory = directory or tempfile.mkdtemp(prefix="reachguard-replay-")
    path = os.path.join(directory, f"replay_{cfg.track}_{cfg.speed_setpoint}_{cfg.seed}.jsonl")
    write_replay_log(path, [(t, ControlAction(*a)) for t, a in ep.emitted_actions()])
    return path


def prepare(cfg: ExperimentConfig, workdir: Optional[str] = None) -> ExperimentConfig:
    if cfg.controller == "replay" and cfg.replay_log is None:
        return cfg.replace(replay_log=record_replay_log(cfg, workdir))
    return cfg


def run_repeats(cfg: ExperimentConfig, workers: int = 1, workdir: Optional[str] = None) -> list[EpisodeLog]:
    """All repeats of one configuration, seeds ``seed, seed+1, ...``."""
    cfg = prepare(cfg, workdir)
    jobs = [(cfg, s) for s in episode_seeds(cfg)]
    if cfg.clock == "wall":
        workers = 1  # timing runs must not compete for the CPU
    if workers <= 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))


@dataclass
class CellResult:
    key: dict
    report: Optional[MetricsReport]
    error: Optional[str] = None


def run_cell(cfg: ExperimentConfig, key: dict, workers: int = 1, workdir: Optional[str] = None) -> CellResult:
    try:
        logs = run_repeats(cfg, workers, workdir)
        return CellResult(key, compute_metrics(logs, cfg.t_runtime))
    except Exception as e:  # report per cell, keep going
        log.error("cell %s failed: %s", key, e)
        return CellResult(key, None, f"{type(e).__name__}: {e}\n{traceback.format_exc(limit=3)}")


def _run_safe(args):
    try:
        return _run_one(args), None
    except Exception as e:
        return None, f"{type(e).__name__}: {e}\n{traceback.format_exc(limit=3)}"


def run_cells(cfgs: Sequence[ExperimentConfig], keys: Sequence[dict], workers: int = 1) -> list[CellResult]:
    """Several prepared configurations, with episodes fanned out across all of them."""
    jobs = [(i, (c, s)) for i, c in enumerate(cfgs) for s in episode_seeds(c)]
    if workers <= 1 or any(c.clock == "wall" for c in cfgs):
        results = [_run_safe(j) for _, j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_safe, [j for _, j in jobs]))
    out = []
    for i, (c, key) in enumerate(zip(cfgs, keys)):
        mine = [r for (ci, _), r in zip(jobs, results) if ci == i]
        errs = [e for _, e in mine if e]
        if errs:
            log.error("cell %s failed: %s", key, errs[0].splitlines()[0])
            out.append(CellResult(key, None, errs[0]))
            continue
        try:
            out.append(CellResult(key, compute_metrics([lg for lg, _ in mine], c.t_runtime)))
        except Exception as e:
            out.append(CellResult(key, None, f"{type(e).__name__}: {e}"))
    return out


def safety_table(base: ExperimentConfig, simplex: bool, controllers: Sequence[str] = TABLE_CONTROLLERS,
                 opponents: Sequence[int] = TABLE_OPPONENTS, speeds: Sequence[float] = TABLE_SPEEDS,
                 workers: int = 1, workdir: Optional[str] = None):
    """Rows of (controller, opponents, speed) with obstacle and no-obstacle cells."""
    rows = []
    for c in controllers:
        for n in opponents:
            for u in speeds:
                row = {"controller": c, "opponents": n, "speed": u}
                for obs_key, layout in (("obstacles", "default"), ("no_obstacles", "none")):
                    cfg = base.replace(controller=c, opponents=n, speed_setpoint=u, obstacles=layout,
                                       simplex=simplex, replay_log=None if c == "replay" else base.replay_log)
                    row[obs_key] = run_cell(cfg, dict(row, obstacles=layout), workers, workdir)
                rows.append(row)
    return rows


SAFETY_TABLE_HEADER = ["controller", "opponents", "speed_mps",
                       "obstacles_safe_actions_pct", "obstacles_safe_actions_sd", "obstacles_collision_freq_pct",
                       "no_obstacles_safe_actions_pct", "no_obstacles_safe_actions_sd",
                       "no_obstacles_collision_freq_pct", "errors"]


def safety_table_rows(rows) -> list[list]:
    out = []
    for r in rows:
        line = [r["controller"], r["opponents"], r["speed"]]
        errors = []
        for k in ("obstacles", "no_obstacles"):
            cell: CellResult = r[k]
            if cell.report is None:
                line += ["", "", ""]
                errors.append(f"{k}: {cell.error.splitlines()[0]}")
            else:
                rep = cell.report
                line += [round(rep.safe_action_pct, 2), round(rep.safe_action_pct_sd, 2),
                         round(rep.collision_frequency_pct, 1)]
        line.append("; ".join(errors))
        out.append(line)
    return out


def sweep_base() -> ExperimentConfig:
    """The configuration the uncertainty sweep varies."""
    return ExperimentConfig(controller="pure_pursuit", simplex=True, speed_setpoint=0.5, opponents=0,
                            obstacles="none", track="oval", duration=30.0, repeats=1)


def run_uncertainty_sweep(base: ExperimentConfig, pcts: Sequence[float] = SWEEP_PCTS,
                          localization: str = "ground_truth", workers: int = 1,
                          workdir: Optional[str] = None):
    """One metrics row per uncertainty level: ``(pct, usage %, median area, report)``.

    ``localization="inflated"`` widens the initial set and feeds the
    controllers a noisy pose estimate inside it.
    """
    if list(pcts) != sorted(pcts):
        raise ValueError("pcts must be sorted ascending")
    if localization not in ("ground_truth", "inflated"):
        raise ValueError("localization must be 'ground_truth' or 'inflated'")
    if localization == "inflated":
        base = base.replace(localization_inflation=PF_INFLATION, localization_noise=True)
    base = prepare(base, workdir)
    cfgs = [base.replace(param_uncertainty_pct=float(p)) for p in pcts]
    cells = run_cells(cfgs, [{"pct": p} for p in pcts], workers)
    rows = []
    for p, cell in zip(pcts, cells):
        if cell.report is None:
            rows.append((p, float("nan"), float("nan"), None, cell.error))
        else:
            rows.append((p, cell.report.complex_usage_pct, cell.report.median_flowpipe_area, cell.report, None))
    return rows


SWEEP_HEADER = ["param_uncertainty_pct", "gt_controller_usage_pct", "gt_median_area",
                "pf_controller_usage_pct", "pf_median_area"]


def timing_grid(base: ExperimentConfig, runtimes_ms: Sequence[float], speeds: Sequence[float],
                workdir: Optional[str] = None):
    """Wall-clock timing cells, always run one at a time."""
    rows = []
    for u in speeds:
        for rt in runtimes_ms:
            cfg = base.replace(speed_setpoint=u, t_runtime=rt / 1e3, clock="wall")
            rows.append(run_cell(cfg, {"speed": u, "t_runtime_ms": rt}, workers=1, workdir=workdir))
    return rows


def timing_base() -> ExperimentConfig:
    return ExperimentConfig(controller="pure_pursuit", simplex=True, opponents=2, obstacles="none",
                            track="oval", duration=60.0, repeats=1, clock="wall")


TIMING_HEADER = ["speed_mps", "t_runtime_ms", "moet_ms", "mean_et_ms", "mean_et_sd", "mean_iters",
                 "mean_iters_sd", "pmd_pct", "pmd_sd", "errors"]


def timing_rows(cells) -> list[list]:
    out = []
    for c in cells:
        line = [c.key["speed"], c.key["t_runtime_ms"]]
        if c.report is None:
            out.append(line + [""] * 7 + [c.error.splitlines()[0]])
            continue
        r = c.report
        out.append(line + [round(r.moet_ms, 3), round(r.mean_et_ms, 3), round(r.mean_et_ms_sd, 3),
                           round(r.mean_iters, 2), round(r.mean_iters_sd, 2), round(r.pmd_pct, 2),
                           round(r.pmd_pct_sd, 2), ""])
    return out
