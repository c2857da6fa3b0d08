"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import filecmp
import glob
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, load_shipped_config
from helpers import golden_exact, random_state
from robinfb.core import Disk, ProblemSpec
from robinfb.diagnostics import conformal_flatten, interface_traces, theta
from robinfb.energy import interface_integral, perimeter_decomposition_check, side_integral, total_energy
from robinfb.solver1d import bridged_energy, bridged_energy_opt, disjoint_energy, interface_threshold, optimal_ell
from robinfb.solver2d import SolverParams, continuation, initial_state, support_touches_margin, u_step


def verdict(n, checks, elapsed, limit):
    """Record and assert one criterion; ``checks`` maps a description to a bool."""
    checks = dict(checks)
    if limit is not None:
        checks[f"runtime {elapsed:.1f}s < {limit:g}s"] = elapsed < limit
    failed = [k for k, ok in checks.items() if not ok]
    line = f"criterion {n}: {'PASS' if not failed else 'FAIL'} ({'; '.join(failed or checks)})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert not failed, line


def bisect(f, lo, hi, tol=1e-15):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_1_closed_forms():
    from fractions import Fraction

    t0 = time.perf_counter()
    worst = 0.0
    for beta in (0.25, 1.0, 2.0, 7.5):
        for eps in (0.0, 0.2, 1.0, 3.0):
            b, e = Fraction(beta), Fraction(eps)
            x = golden_exact(lambda l: bridged_energy(b, e, l), 0.0, 1.0)
            worst = max(worst, abs(x - 2 / (2 + beta + eps * beta)), abs(x - optimal_ell(beta, eps)))
    elapsed = time.perf_counter() - t0
    verdict(
        1,
        {
            f"optimal_ell vs golden section {worst:.1e} <= 1e-12": worst <= 1e-12,
            "bridged_energy(2,0,0.5) == 3": bridged_energy(2.0, 0.0, 0.5) == 3.0,
            "disjoint_energy == 4": disjoint_energy() == 4.0,
        },
        elapsed,
        1.0,
    )


def test_criterion_2_crossover():
    t0 = time.perf_counter()
    # bridged optimum at beta = 1 equals 4 where (eps^2 + 2 eps - 2)(eps + 3) = 0
    root_cubic = bisect(lambda e: e**3 + 5 * e**2 + 4 * e - 6, 0.0, 1.0)
    root_direct = bisect(lambda e: bridged_energy_opt(1.0, e) - 4.0, 0.0, 1.0)
    e0 = interface_threshold(1.0)
    elapsed = time.perf_counter() - t0
    d1, d2 = abs(e0 - root_cubic), abs(e0 - root_direct)
    verdict(
        2,
        {f"|eps0 - cubic root| {d1:.1e} <= 1e-10": d1 <= 1e-10, f"|eps0 - crossover root| {d2:.1e} <= 1e-10": d2 <= 1e-10},
        elapsed,
        1.0,
    )


def test_criterion_3_discrete_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_if, worst_per = 0.0, 0
    for _ in range(100):
        s = random_state(rng, n=32)
        worst_if = max(worst_if, abs(2 * interface_integral(s) - side_integral(s, 1) - side_integral(s, 2)))
        worst_per = max(worst_per, abs(perimeter_decomposition_check(s.grid, s.labels)[2]))
    elapsed = time.perf_counter() - t0
    verdict(
        3,
        {f"half-sum identity defect {worst_if}": worst_if == 0.0, f"perimeter decomposition defect {worst_per}": worst_per == 0},
        elapsed,
        5.0,
    )


def test_criterion_4_strip(cli_runs):
    _, elapsed = cli_runs.get("strip")
    s = cli_runs.state("strip")
    spec = ProblemSpec.from_dict(load_shipped_config("strip")["spec"])
    h = s.grid.h
    tr = interface_traces(s)
    ell = optimal_ell(1.0, 0.2)
    e = total_energy(s, spec.beta, spec.lam)
    ratio = e.total_J / (s.grid.ny * h) / bridged_energy_opt(1.0, 0.2)
    dev = float(np.max(np.abs(tr - ell))) if tr.size else math.inf
    verdict(
        4,
        {
            f"bridged ({tr.size} interface faces)": tr.size > 0,
            f"trace {np.mean(tr) if tr.size else float('nan'):.4f} vs {ell} off by {dev:.2e} <= 5h": dev <= 5 * h,
            f"J per height / closed form {ratio:.4f} within 5%": abs(ratio - 1) <= 0.05,
        },
        elapsed,
        120.0,
    )


def test_criterion_5_one_phase(cli_runs):
    _, elapsed = cli_runs.get("one_phase")
    rep = cli_runs.report("one_phase")
    s = cli_runs.state("one_phase")
    lam = load_shipped_config("one_phase")["spec"]["lambda"]
    sl = math.sqrt(lam)
    th = theta(lam)
    h = s.grid.h

    med = float(np.median(rep["fb_residuals"]))
    fits = {(p["x"], p["y"]): p for p in rep["weiss_fit"]["points"]}
    weiss_ok, gamma_ok, low_ok = True, True, True
    for x, y, r, w in rep["weiss"]:
        f = fits[(x, y)]
        gamma_ok &= f["gamma"] is None or f["gamma"] > 0  # None encodes a flat fit
        upper = th if f["gamma"] is None else th + f["C0"] * r ** f["gamma"]
        weiss_ok &= w <= upper * (1 + 1e-12)
        low_ok &= w >= 0.95 * th
    ladders = {}
    for x, y, r, _, _, err in rep["blowup_errors"]:
        ladders.setdefault((x, y), []).append((r, err))
    worst8, mono = 0.0, True
    for pts in ladders.values():
        pts.sort(reverse=True)
        errs = [e for _, e in pts]
        mono &= all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
        worst8 = max(worst8, dict(pts)[min(r for r, _ in pts)])
    smallest = min(r for pts in ladders.values() for r, _ in pts)
    summ = rep["growth_summary"]
    verdict(
        5,
        {
            f"{len(fits)} sample points": len(fits) > 0,
            f"median fb residual {med / sl:.3f} sqrt(Lambda) <= 0.2": med <= 0.2 * sl,
            "Weiss >= 0.95 Theta": low_ok,
            "Weiss <= Theta + C0 r^gamma": weiss_ok,
            "fitted gamma > 0": gamma_ok,
            f"blow-up at r=8h {worst8 / sl:.3f} sqrt(Lambda) <= 0.1": abs(smallest - 8 * h) < 1e-12 and worst8 <= 0.1 * sl,
            "blow-up nonincreasing on the ladder": mono,
            f"density c {summ['c']:.3f} >= 0.1": summ["c"] >= 0.1,
            f"eta {summ['eta'] / sl:.3f} sqrt(Lambda) >= 0.3": summ["eta"] >= 0.3 * sl,
            f"C {summ['C'] / sl:.3f} sqrt(Lambda) <= 3": summ["C"] <= 3 * sl,
        },
        elapsed,
        300.0,
    )


def test_criterion_6_two_phase(cli_runs):
    _, elapsed = cli_runs.get("two_disks")
    rep = cli_runs.report("two_disks")
    s = cli_runs.state("two_disks")
    cfg = load_shipped_config("two_disks")
    spec = ProblemSpec.from_dict(cfg["spec"])
    params = SolverParams.from_dict(cfg.get("params", {}))
    final = total_energy(s, spec.beta, spec.lam).total_J

    t0 = time.perf_counter()
    # disjoint initialization: each fixed set dilated on its own side, u re-solved
    r0 = 0.3 * spec.e_distance()
    init = u_step(initial_state(spec, r0), spec.beta, spec.lam)
    e_init = total_energy(init, spec.beta, spec.lam).total_J
    # disjoint competitor: sum of the two one-phase minimizers (mirror images)
    one = ProblemSpec(box=spec.box, resolution=spec.resolution, shapes_E1=(Disk((0.34, 0.5), 0.1),), lam=spec.lam, one_phase_mode=True)
    s1, _ = continuation(one, params)
    e_sep = 2 * total_energy(s1, 0.0, spec.lam).total_J
    elapsed += time.perf_counter() - t0

    ubar = interface_traces(s)
    robin_med = float(np.median(rep["robin_residuals"])) if rep["robin_residuals"] else math.inf
    bound = 0.3 * spec.beta * float(ubar.max()) if ubar.size else 0.0
    ang = rep["contact_angles"]
    verdict(
        6,
        {
            f"bridged ({ubar.size} interface faces)": ubar.size > 0,
            f"J {final:.4f} < disjoint init {e_init:.4f}": final < e_init,
            f"J {final:.4f} < two one-phase minimizers {e_sep:.4f}": final < e_sep,
            f"robin median {robin_med:.4f} <= {bound:.4f}": robin_med <= bound,
            f"minimality {rep['interface_minimality']:.2e} >= -1e-9": rep["interface_minimality"] >= -1e-9,
            f"contact angles {[round(a, 1) for a in ang]} within 90 +- 10": len(ang) > 0 and all(abs(a - 90) <= 10 for a in ang),
            f"non-collapse {rep['noncollapse_min']:.3f} > 0": rep["noncollapse_min"] > 0,
            "support inside the margin ring": not support_touches_margin(s),
        },
        elapsed,
        600.0,
    )


def test_criterion_7_flattening(cli_runs):
    s = cli_runs.state("two_disks")
    opts = load_shipped_config("two_disks")["diagnostics"]
    t0 = time.perf_counter()
    res = conformal_flatten(s, tuple(opts["flatten_center"]), opts["flatten_radius_cells"] * s.grid.h)
    elapsed = time.perf_counter() - t0
    verdict(
        7,
        {
            f"plaquette residual {res.loop_residual:.2e} <= 10 x harmonic defect (excess {res.loop_excess:.1e})": res.loop_excess <= 1e-12,
            f"weighted-length identity residual {res.identity_residual:.2e} <= 2%": res.identity_residual <= 0.02,
        },
        elapsed,
        60.0,
    )


@pytest.mark.slow
def test_criterion_8_determinism(cli_runs):
    diffs, n = [], 0
    t0 = time.perf_counter()
    for name in ("strip", "one_phase", "two_disks"):
        a, _ = cli_runs.get(name, "a")
        b, _ = cli_runs.get(name, "b")
        files = sorted(os.path.basename(p) for p in glob.glob(os.path.join(a, "*.csv")))
        n += len(files)
        for f in files:
            if not filecmp.cmp(os.path.join(a, f), os.path.join(b, f), shallow=False):
                diffs.append(f"{name}/{f}")
    verdict(8, {f"{n} CSV files byte-identical" + (f", differing: {diffs}" if diffs else ""): n > 0 and not diffs}, time.perf_counter() - t0, None)
