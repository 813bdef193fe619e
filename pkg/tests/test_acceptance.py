"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The full (p, rho) grid is simulated once per session (45 points, 3 seeds,
1e5 packets each) and shared by criteria 1 to 4.
"""

import logging
import math
import time

import numpy as np
import pytest
from scipy.integrate import trapezoid

from tandem_aoi import analytics as an
from tandem_aoi.experiments import DEFAULT_P, DEFAULT_RHO, SweepSpec, find_aoi_minimum, run_sweep
from tandem_aoi.params import SystemParams
from tandem_aoi.simulator import run_simulation
from tandem_aoi.transforms import (
    ServiceDistribution,
    busy_period_lst,
    invert_lst_cdf,
    lst_eval,
    numeric_mean_from_lst,
)
from tandem_aoi.validation import simulator_checks

pytestmark = pytest.mark.slow

GRID_BUDGET_S = 300.0


@pytest.fixture(scope="module")
def grid():
    spec = SweepSpec(p_values=DEFAULT_P, rho_values=DEFAULT_RHO, n_packets=100_000, seeds=(1, 2, 3))
    t0 = time.perf_counter()
    res = run_sweep(spec)
    return spec, res, time.perf_counter() - t0


def test_criterion_1_class2_exact(grid, acceptance_line):
    spec, res, elapsed = grid
    bad, worst = [], 0.0
    for r in res.rows:
        if r.cls != 2:
            continue
        tol = 0.02 if r.rho <= 0.7 + 1e-9 else 0.04
        worst = max(worst, r.rel_error / tol)
        if r.rel_error > tol:
            bad.append(f"p={r.p} rho={r.rho} {r.metric} {r.rel_error:.3%}")
    n = sum(1 for r in res.rows if r.cls == 2)
    ok = not bad and n == 45 * 3 and elapsed < GRID_BUDGET_S
    acceptance_line(
        1, ok,
        f"{n} class-2 comparisons, worst error at {worst:.0%} of tolerance, "
        f"{len(bad)} misses, grid runtime {elapsed:.0f} s (budget {GRID_BUDGET_S:.0f} s)",
    )
    assert not bad, bad
    assert n == 45 * 3
    assert elapsed < GRID_BUDGET_S


def test_criterion_2_class1_bound(grid, acceptance_line):
    spec, res, _ = grid
    paoi = [r for r in res.rows if r.cls == 1 and r.metric == "A"]
    lower = [r for r in res.rows if r.cls == 1 and r.metric == "AoI"]
    paoi_bad = [(r.p, r.rho, r.rel_error) for r in paoi if r.rel_error > 0.03]
    lower_bad = [(r.p, r.rho, r.analytic, r.simulated) for r in lower if r.analytic > r.simulated + r.ci_halfwidth]
    worst = max(r.rel_error for r in paoi)
    ok = not paoi_bad and not lower_bad and len(paoi) == len(lower) == 45
    acceptance_line(
        2, ok,
        f"class-1 PAoI worst error {worst:.2%} (limit 3%), lower bound violated at {len(lower_bad)} of {len(lower)} points",
    )
    assert not paoi_bad, paoi_bad
    assert not lower_bad, lower_bad
    assert len(paoi) == len(lower) == 45


def test_criterion_3_u_shape(grid, acceptance_line):
    spec, res, _ = grid
    # grid rows whose rho sweep reaches rho1 = 0.63
    crossing = [p for p in spec.p_values if p * max(spec.rho_values) >= 0.63]
    minima = {p: find_aoi_minimum(SweepSpec(p_values=(p,), rho_values=spec.rho_values), 1, res) for p in spec.p_values}
    checked = [minima[p] for p in crossing]
    ok = bool(checked) and all(m.interior and 0.5 <= m.rho1 <= 0.75 for m in checked)
    where = ", ".join(f"p={p}: rho1={m.rho1:.2f}{'' if m.interior else ' (boundary)'}" for p, m in minima.items())
    acceptance_line(3, ok, f"class-1 age minimum needs interior rho1 in [0.5, 0.75] at p={crossing}; found {where}")
    assert checked
    for m in checked:
        assert m.interior, m
        assert 0.5 <= m.rho1 <= 0.75, m


def test_criterion_4_paoi_dominates_aoi(grid, acceptance_line):
    spec, res, _ = grid
    below, loose, worst_gap = [], [], 0.0
    for p in spec.p_values:
        for rho in spec.rho_values:
            for j in (1, 2):
                a = res.lookup(p, rho, j, "A")
                d = res.lookup(p, rho, j, "AoI")
                if a is None or d is None:
                    continue
                if a.simulated < d.simulated:
                    below.append((p, rho, j))
                gap = (a.simulated - d.simulated) / a.simulated
                if rho <= 0.5 + 1e-9:
                    worst_gap = max(worst_gap, gap)
                    if gap > 0.15:
                        loose.append((p, rho, j, round(gap, 3)))
    ok = not below and not loose
    acceptance_line(
        4, ok,
        f"PAoI < AoI at {len(below)} class-points; largest relative gap at rho <= 0.5 is {worst_gap:.1%} (limit 15%)",
    )
    assert not below, below
    assert not loose, loose


def test_criterion_5_degenerate_oracles(acceptance_line):
    msgs, ok = [], True
    P0 = SystemParams(0.5, 0.0)
    rep = run_simulation(P0, 1_000_000, seed=1)
    st = rep.class2
    for name, analytic, sim, oracle in (
        ("T", an.mean_T2(P0), st.mean_T, 2.0),
        ("A", an.mean_A2(P0), st.mean_A, 4.0),
        ("AoI", an.mean_delta2(P0), st.aoi, 3.5),
    ):
        good = abs(analytic - oracle) <= 0.01 * oracle and abs(sim - oracle) <= 0.01 * oracle
        ok &= good
        msgs.append(f"{name} analytic {analytic:.5f} sim {sim:.4f} vs {oracle}")
    P1 = SystemParams(0.5, 1.0)
    oracle = 1 / (P1.mu - P1.lam1) + P1.b1 + P1.lam1 * P1.svc1.m2 / (2 * (1 - P1.rho1))
    analytic = an.mean_T1(P1)
    sim = run_simulation(P1, 1_000_000, seed=1).class1.mean_T
    good = abs(analytic - oracle) < 1e-6 and abs(sim - oracle) <= 0.01 * oracle
    ok &= good
    msgs.append(f"p=1 E[T1] analytic {analytic:.8f} sim {sim:.4f} vs {oracle}")
    acceptance_line(5, ok, "; ".join(msgs))
    assert ok, msgs


def mm1_busy_root(lam, s):
    a = s + lam + 1.0
    return (a - math.sqrt(a * a - 4 * lam)) / (2 * lam)


def test_criterion_6_transform_suite(caplog, acceptance_line):
    fails = []
    exp1 = ServiceDistribution.exponential(1.0)
    laws = [exp1, ServiceDistribution.deterministic(1.0), ServiceDistribution.erlang(3, 3.0),
            ServiceDistribution.hyperexponential((0.2, 0.8), (0.4, 1.6))]
    s_grid = np.linspace(0.0, 20.0, 201)
    worst_res = worst_quad = 0.0
    for dist in laws:
        for load in (0.1, 0.5, 0.9):
            lam = load / dist.mean
            for s in s_grid:
                g = busy_period_lst(dist, lam, float(s))
                worst_res = max(worst_res, abs(g - lst_eval(dist, s + lam - lam * g)))
                if dist is exp1:
                    worst_quad = max(worst_quad, abs(g - mm1_busy_root(lam, float(s))))
    if worst_res >= 1e-12:
        fails.append(f"busy-period residual {worst_res:.1e}")
    if worst_quad >= 1e-10:
        fails.append(f"quadratic mismatch {worst_quad:.1e}")

    points = [SystemParams.from_utilization(rho, p) for p in DEFAULT_P for rho in (0.1, 0.5, 0.9)]
    points += [SystemParams.from_utilization(0.7, 0.5, 1.0, d1, d2) for d1 in laws for d2 in laws]
    worst_norm = worst_case = 0.0
    s3 = np.array([0.1, 0.5, 1.0])
    for P in points:
        vals = np.array([an.tau12_lst(P, 0.0), an.tau2_lst(P, 0.0), an.alpha2_lst(P, 0.0)])
        worst_norm = max(worst_norm, float(np.max(np.abs(vals - 1))))
        cases = an.case_lsts_priority(P, s3)
        worst_case = max(worst_case, float(np.max(np.abs(sum(c.alpha for c in cases) - an.alpha1_lst(P, s3)))))
    if worst_norm >= 1e-9:
        fails.append(f"normalisation {worst_norm:.1e}")
    if worst_case >= 1e-9:
        fails.append(f"case sum {worst_case:.1e}")

    # closed forms vs numeric derivatives: agree within 1e-6 or appear as a logged discrepancy
    silent, logged = [], set()
    for P in points[:15]:
        caplog.clear()
        with caplog.at_level(logging.WARNING, logger="tandem_aoi"):
            rep = an.analyze(P)
        messages = " ".join(r.getMessage() for r in caplog.records)
        for d in rep.discrepancies:
            logged.add(d.quantity)
            if d.quantity not in messages:
                silent.append(d.quantity)
        checked = {"E[T1]", "E[A1]"} if P.has_class1 else set()
        checked |= {"E[T2]", "E[A2]", "E[D2]"} if P.has_class2 else set()
        for q in checked:
            d = an._compare([], q, *_closed_and_numeric(P, q))
            if d.rel_diff > 1e-6 and q not in {x.quantity for x in rep.discrepancies}:
                silent.append(q)
    if silent:
        fails.append(f"unlogged disagreements {sorted(set(silent))}")
    ok = not fails
    acceptance_line(
        6, ok,
        f"busy residual {worst_res:.1e}, quadratic {worst_quad:.1e}, normalisation {worst_norm:.1e}, "
        f"case sum {worst_case:.1e}, logged discrepancies {sorted(logged)}"
        + (f"; failures: {fails}" if fails else ""),
    )
    assert ok, fails


def _closed_and_numeric(P, q):
    def nm(name):
        return numeric_mean_from_lst(an.transform(P, name))

    return {
        "E[T1]": lambda: (an.mean_T1(P), nm("tau1")),
        "E[A1]": lambda: (an.mean_A1(P), nm("alpha1")),
        "E[T2]": lambda: (an.mean_T2_closed(P), nm("tau2")),
        "E[A2]": lambda: (an.mean_A2(P), nm("alpha2")),
        "E[D2]": lambda: (an.mean_delta2(P), nm("delta2")),
    }[q]()


def test_criterion_7_inversion(acceptance_line):
    msgs, ok = [], True
    for p, rho in ((0.5, 0.5), (0.1, 0.9), (0.9, 0.9)):
        P = SystemParams.from_utilization(rho, p)
        mean = an.mean_delta2(P)
        t = np.linspace(0.0, 30.0 * mean, 6001)
        F = invert_lst_cdf(an.transform(P, "delta2"), t)
        monotone = bool(np.all(np.diff(F) >= -1e-9))
        reaches = bool(F[-1] >= 1 - 1e-3)
        integral = float(trapezoid(1 - F, t))
        rel = abs(integral - mean) / mean
        good = monotone and reaches and rel <= 0.005
        ok &= good
        msgs.append(f"p={p} rho={rho}: monotone={monotone} F(end)={F[-1]:.6f} mean {integral:.4f} vs {mean:.4f}")
    acceptance_line(7, ok, "; ".join(msgs))
    assert ok, msgs


def test_criterion_8_simulator_properties(acceptance_line):
    msgs, ok = [], True
    for p, rho in ((0.5, 0.5), (0.9, 0.9), (0.1, 0.9)):
        rep = run_simulation(SystemParams.from_utilization(rho, p), 100_000, seed=1)
        results = simulator_checks(rep)
        failed = [r.name for r in results if not r.passed]
        ok &= not failed and len(results) == 6
        msgs.append(f"p={p} rho={rho}: {len(results) - len(failed)}/{len(results)} pass" + (f" {failed}" if failed else ""))
    acceptance_line(8, ok, "; ".join(msgs))
    assert ok, msgs
