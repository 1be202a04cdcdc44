"""Episode metrics and their CSV form.

Per-episode rates are averaged across episodes (mean and sample standard
deviation); MOET, median area and controller usage pool every period.
All sums go through ``math.fsum`` so results do not depend on episode order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    episodes: int
    periods: int
    safe_action_pct: float
    safe_action_pct_sd: float
    collision_frequency_pct: float
    mean_et_ms: float
    mean_et_ms_sd: float
    moet_ms: float
    mean_iters: float
    mean_iters_sd: float
    pmd_pct: float
    pmd_pct_sd: float
    median_flowpipe_area: float
    complex_usage_pct: float

    def as_row(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _mean_sd(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    m = math.fsum(xs) / n
    if n < 2:
        return m, 0.0
    # sample sd; sort first so the sum is order independent
    var = math.fsum(sorted((x - m) ** 2 for x in xs)) / (n - 1)
    return m, math.sqrt(var)


def _records(log):
    return log.records if hasattr(log, "records") else log


def compute_metrics(logs, t_runtime: float | None = None) -> MetricsReport:
    """Aggregate a list of episode logs (objects with ``records`` or record lists).

    A deadline counts as missed from the logged flag, or when ``t_runtime``
    is given, from the logged elapsed time exceeding it.
    """
    logs = list(logs)
    if not logs:
        raise ValueError("compute_metrics needs at least one episode log")
    safe_pct, et, iters, pmd = [], [], [], []
    all_et, all_area = [], []
    collided = 0
    complex_n = 0
    total = 0
    for log in logs:
        recs = _records(log)
        if not recs:
            raise ValueError("episode log has no periods")
        n = len(recs)
        total += n
        safe_pct.append(100.0 * sum(r["verdict"] == "safe" for r in recs) / n)
        e = [float(r["elapsed_ms"]) for r in recs]
        et.append(math.fsum(e) / n)
        all_et.extend(e)
        iters.append(math.fsum(float(r["iterations"]) for r in recs) / n)
        if t_runtime is None:
            missed = sum(bool(r["deadline_missed"]) for r in recs)
        else:
            missed = sum(float(r["elapsed_ms"]) > t_runtime * 1e3 for r in recs)
        pmd.append(100.0 * missed / n)
        all_area.extend(float(r["flowpipe_area"]) for r in recs if r.get("flowpipe_area") is not None)
        collided += any(r["collision"] for r in recs)
        complex_n += sum(r["active_controller"] == "complex" for r in recs)
    sa, sa_sd = _mean_sd(safe_pct)
    me, me_sd = _mean_sd(et)
    mi, mi_sd = _mean_sd(iters)
    pm, pm_sd = _mean_sd(pmd)
    return MetricsReport(
        episodes=len(logs),
        periods=total,
        safe_action_pct=sa,
        safe_action_pct_sd=sa_sd,
        collision_frequency_pct=100.0 * collided / len(logs),
        mean_et_ms=me,
        mean_et_ms_sd=me_sd,
        moet_ms=max(all_et),
        mean_iters=mi,
        mean_iters_sd=mi_sd,
        pmd_pct=pm,
        pmd_pct_sd=pm_sd,
        median_flowpipe_area=float(np.median(all_area)) if all_area else float("nan"),
        complex_usage_pct=100.0 * complex_n / total,
    )


_INT_FIELDS = {"episodes", "periods"}


def reports_to_csv(reports: Sequence[MetricsReport], extra: Sequence[dict] | None = None) -> str:
    """CSV text; ``extra`` adds leading key columns per row."""
    names = [f.name for f in fields(MetricsReport)]
    keys = list(extra[0].keys()) if extra else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys + names)
    for i, rep in enumerate(reports):
        row = [extra[i][k] for k in keys] if extra else []
        row += [repr(getattr(rep, n)) if isinstance(getattr(rep, n), float) else getattr(rep, n) for n in names]
        w.writerow(row)
    return buf.getvalue()


def reports_from_csv(text: str) -> list[MetricsReport]:
    rd = csv.DictReader(io.StringIO(text))
    out = []
    for row in rd:
        kw = {}
        for f in fields(MetricsReport):
            v = row[f.name]
            kw[f.name] = int(v) if f.name in _INT_FIELDS else float(v)
        out.append(MetricsReport(**kw))
    return out


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def write_plot_data(path, header: Sequence[str], rows: Sequence[Sequence]):
    """Whitespace-separated columns with a ``#`` header, readable by gnuplot."""
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for r in rows:
            fh.write(" ".join(str(v) for v in r) + "\n")
