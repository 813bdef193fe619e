"""Utilisation sweeps comparing the analysis with simulation.

A sweep walks a (p, rho) grid, solves ``lam`` from ``rho``, evaluates the
analytic means and runs one simulation per seed.  Output files:

- ``class{j}_{metric}.csv`` for j in 1, 2 and metric in T, A, AoI, with
  columns ``rho, p, metric, analytic, simulated, ci_halfwidth``;
- ``comparison.csv`` with every :class:`ComparisonRow` field;
- ``class1_bound_tightness.csv`` with ``rho, p, rho2, metric, abs_gap``;
- ``summary.txt``, one comparison table per metric.

Floats are written with 10 significant digits and rows are sorted, so the
files are byte-identical across reruns with the same spec.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytics as an
from .errors import DomainError, StabilityError
from .params import SystemParams
from .simulator import run_simulation
from .transforms import parse_service

__all__ = ["SweepSpec", "ComparisonRow", "SweepResult", "AoiMinimum", "run_sweep", "find_aoi_minimum", "evaluate_point"]

METRICS = ("T", "A", "AoI")
PANEL_COLUMNS = ("rho", "p", "metric", "analytic", "simulated", "ci_halfwidth")
DEFAULT_P = (0.1, 0.3, 0.5, 0.7, 0.9)
DEFAULT_RHO = tuple(round(0.1 * k, 1) for k in range(1, 10))


@dataclass(frozen=True)
class SweepSpec:
    """Grid and simulation settings for a sweep.

    ``b`` is the mean first-hop service time (``mu = 1/b``); ``b1`` and
    ``b2`` are the second-hop means.  Service kinds use the short strings of
    :func:`tandem_aoi.transforms.parse_service`.
    """

    p_values: tuple = DEFAULT_P
    rho_values: tuple = DEFAULT_RHO
    b: float = 1.0
    b1: float = 1.0
    b2: float = 1.0
    svc1: str = "exp"
    svc2: str = "exp"
    n_packets: int = 100_000
    seeds: tuple = (1, 2, 3)
    warmup_fraction: float = 0.1
    out_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.p_values:
            raise DomainError("sweep needs at least one p value")
        if not self.rho_values:
            raise DomainError("sweep needs at least one rho value")
        if not self.seeds:
            raise DomainError("sweep needs at least one seed")
        if min(self.b, self.b1, self.b2) <= 0:
            raise DomainError("service means must be positive")

    def params_at(self, p: float, rho: float) -> SystemParams:
        return SystemParams.from_utilization(
            rho, p, 1 / self.b, parse_service(self.svc1, self.b1), parse_service(self.svc2, self.b2)
        )


@dataclass(frozen=True)
class ComparisonRow:
    p: float
    rho: float
    cls: int
    metric: str
    analytic: float
    simulated: float
    ci_halfwidth: float
    label: str

    @property
    def rel_error(self) -> float:
        return abs(self.analytic - self.simulated) / abs(self.simulated)

    def key(self):
        return (self.p, self.rho, self.cls, self.metric)


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list
    skipped: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def lookup(self, p, rho, cls, metric) -> ComparisonRow | None:
        for r in self.rows:
            if r.key() == (p, rho, cls, metric):
                return r
        return None


def _combine(values, halfwidths):
    """Mean over replications and the half-width of that mean."""
    v = np.asarray(values, dtype=float)
    h = np.asarray(halfwidths, dtype=float)
    return float(v.mean()), float(math.sqrt(np.sum(h**2)) / len(h))


def evaluate_point(spec: SweepSpec, p: float, rho: float):
    """Analytic and simulated rows for one grid point.

    Returns ``(rows, None)`` or ``([], reason)`` if the point is unstable.
    """
    try:
        P = spec.params_at(p, rho)
    except StabilityError as exc:
        return [], str(exc)
    analytic = {}
    if P.has_class1:
        analytic[1] = {
            "T": (an.mean_T1(P), an.EXACT),
            "A": (an.mean_A1(P), an.APPROX),
            "AoI": (an.mean_delta1_lower(P), an.BOUND),
            "AoI_model": (an.mean_delta1(P), an.APPROX),
        }
    if P.has_class2:
        analytic[2] = {
            "T": (an.mean_T2(P), an.EXACT),
            "A": (an.mean_A2(P), an.EXACT),
            "AoI": (an.mean_delta2(P), an.EXACT),
        }
    sims = {1: {}, 2: {}}
    for seed in spec.seeds:
        rep = run_simulation(P, spec.n_packets, seed, spec.warmup_fraction)
        for j in (1, 2):
            st = rep.stats(j)
            if st is None:
                continue
            for m, val, h in (("T", st.mean_T, st.ci_T), ("A", st.mean_A, st.ci_A), ("AoI", st.aoi, st.ci_aoi)):
                sims[j].setdefault(m, []).append((val, h))
            sims[j].setdefault("AoI_model", []).append((st.aoi, st.ci_aoi))
    rows = []
    for j, metrics in analytic.items():
        for m, (val, label) in metrics.items():
            pairs = sims[j].get(m)
            if not pairs or len(pairs) != len(spec.seeds):
                continue
            sim, half = _combine(*zip(*pairs))
            rows.append(ComparisonRow(p, rho, j, m, float(val), sim, half, label))
    return rows, None


def _fmt(x) -> str:
    return f"{x:.10g}"


def _write_outputs(res: SweepResult, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for j in (1, 2):
        for m in METRICS:
            path = os.path.join(out_dir, f"class{j}_{m}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(PANEL_COLUMNS)
                for r in res.rows:
                    if r.cls == j and r.metric == m:
                        w.writerow((_fmt(r.rho), _fmt(r.p), m, _fmt(r.analytic), _fmt(r.simulated), _fmt(r.ci_halfwidth)))
            files.append(path)
    path = os.path.join(out_dir, "comparison.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("p", "rho", "class", "metric", "analytic", "simulated", "ci_halfwidth", "rel_error", "label"))
        for r in res.rows:
            w.writerow(
                (_fmt(r.p), _fmt(r.rho), r.cls, r.metric, _fmt(r.analytic), _fmt(r.simulated),
                 _fmt(r.ci_halfwidth), _fmt(r.rel_error), r.label)
            )
    files.append(path)
    path = os.path.join(out_dir, "class1_bound_tightness.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("rho", "p", "rho2", "metric", "abs_gap"))
        for r in res.rows:
            if r.cls == 1 and r.metric in ("A", "AoI", "AoI_model"):
                rho2 = res.spec.params_at(r.p, r.rho).rho2
                w.writerow((_fmt(r.rho), _fmt(r.p), _fmt(rho2), r.metric, _fmt(abs(r.analytic - r.simulated))))
    files.append(path)
    path = os.path.join(out_dir, "summary.txt")
    with open(path, "w") as fh:
        fh.write(format_summary(res))
    files.append(path)
    return files


def format_summary(res: SweepResult) -> str:
    spec = res.spec
    lines = [
        f"sweep: p={list(spec.p_values)} rho={list(spec.rho_values)} packets={spec.n_packets} seeds={list(spec.seeds)}",
        f"service: b={spec.b} b1={spec.b1} ({spec.svc1}) b2={spec.b2} ({spec.svc2})",
        "",
    ]
    for j in (1, 2):
        for m in METRICS + (("AoI_model",) if j == 1 else ()):
            sel = [r for r in res.rows if r.cls == j and r.metric == m]
            if not sel:
                continue
            lines.append(f"class {j} {m} [{sel[0].label}]")
            lines.append(f"  {'p':>5} {'rho':>5} {'analytic':>12} {'simulated':>12} {'ci':>9} {'rel.err':>8}")
            for r in sel:
                lines.append(
                    f"  {r.p:5.2f} {r.rho:5.2f} {r.analytic:12.5f} {r.simulated:12.5f} "
                    f"{r.ci_halfwidth:9.5f} {r.rel_error:8.4f}"
                )
            lines.append("")
    for p, rho, why in res.skipped:
        lines.append(f"skipped p={p} rho={rho}: {why}")
    return "\n".join(lines).rstrip() + "\n"


def _point_task(args):
    spec, p, rho = args
    return p, rho, evaluate_point(spec, p, rho)


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Evaluate every grid point; write files when ``spec.out_dir`` is set."""
    tasks = [(spec, float(p), float(r)) for p in spec.p_values for r in spec.rho_values]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            results = list(pool.map(_point_task, tasks))
    else:
        results = [_point_task(t) for t in tasks]
    rows, skipped = [], []
    for p, rho, (pt_rows, why) in results:
        if why is not None:
            skipped.append((p, rho, why))
        rows.extend(pt_rows)
    order = {m: i for i, m in enumerate(METRICS + ("AoI_model",))}
    rows.sort(key=lambda r: (r.p, r.rho, r.cls, order[r.metric]))
    skipped.sort()
    res = SweepResult(spec, rows, skipped)
    if spec.out_dir:
        res.files = _write_outputs(res, spec.out_dir)
    return res


@dataclass(frozen=True)
class AoiMinimum:
    p: float
    rho: float
    rho1: float
    value: float
    interior: bool


def find_aoi_minimum(spec: SweepSpec, cls: int = 1, result: SweepResult | None = None) -> AoiMinimum:
    """Grid argmin over rho of the simulated time-average age at one p.

    ``spec`` must name a single p and at least five rho values.  A minimum
    at either end of the grid is reported with ``interior=False``.
    """
    if len(spec.p_values) != 1:
        raise DomainError("restrict the sweep to a single p value")
    if len(spec.rho_values) < 5:
        raise DomainError("need at least five rho values")
    p = float(spec.p_values[0])
    if result is None:
        result = run_sweep(spec)
    sel = sorted((r for r in result.rows if r.p == p and r.cls == cls and r.metric == "AoI"), key=lambda r: r.rho)
    if not sel:
        raise DomainError(f"no class-{cls} age values at p={p}")
    k = int(np.argmin([r.simulated for r in sel]))
    best = sel[k]
    P = spec.params_at(p, best.rho)
    return AoiMinimum(p, best.rho, P.rho1, best.simulated, 0 < k < len(sel) - 1)
