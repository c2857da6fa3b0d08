import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import golden_exact
from robinfb.solver1d import (
    Config1D,
    bridged_energy,
    bridged_energy_opt,
    disjoint_energy,
    golden_section,
    interface_threshold,
    optimal_ell,
    solve_1d_numeric,
    sweep_rows,
    threshold_closed_form,
)


def bisect(f, lo, hi, tol=1e-14):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) < 0) == (flo < 0):
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_disjoint_is_four():
    assert disjoint_energy() == 4.0


def test_bridged_examples():
    assert bridged_energy(1.7, 0.0, 0.0) == 4.0
    assert bridged_energy(2.0, 0.0, 0.5) == 3.0
    assert optimal_ell(1.0, 1.0) == 0.5
    assert bridged_energy(1.0, 1.0, 0.5) == pytest.approx(4.5, abs=1e-15)
    assert optimal_ell(2.0, 0.0) == 0.5
    assert Config1D(0.2, 1.0, 0.625).energy() == bridged_energy_opt(1.0, 0.2)
    with pytest.raises(ValueError):
        Config1D(-0.1, 1.0, 0.5)


@settings(max_examples=60, deadline=None)
@given(beta=st.floats(0.05, 20.0), eps=st.floats(0.0, 5.0))
def test_optimal_ell_matches_golden_section(beta, eps):
    b, e = Fraction(beta), Fraction(eps)
    x = golden_exact(lambda l: bridged_energy(b, e, l), 0.0, 1.0)
    assert abs(x - optimal_ell(beta, eps)) <= 1e-12


def test_float_golden_section_reaches_sqrt_eps():
    x, _ = golden_section(lambda l: bridged_energy(1.0, 0.2, l), 0.0, 1.0)
    assert abs(x - 0.625) <= 1e-7


@settings(max_examples=60, deadline=None)
@given(beta=st.floats(0.05, 20.0), eps=st.floats(0.0, 5.0))
def test_stationarity_and_simplified_form(beta, eps):
    l = optimal_ell(beta, eps)
    d = 1e-6
    grad = (bridged_energy(beta, eps, l + d) - bridged_energy(beta, eps, l - d)) / (2 * d)
    assert abs(grad) <= 1e-8
    q = 2 + beta + eps * beta
    simple = 2 * (1 + eps) * beta**2 / q**2 + beta * (2 / q) ** 2 + 2 + 2 * eps
    assert bridged_energy_opt(beta, eps) == pytest.approx(simple, abs=1e-12)
    slope = (1 - l) / (1 + eps)
    assert 2 * slope == pytest.approx(beta * l, rel=1e-12)


def test_threshold_beta1_against_cubic():
    root = bisect(lambda e: e**3 + 5 * e**2 + 4 * e - 6, 0.0, 1.0)
    assert abs(interface_threshold(1.0) - root) <= 1e-10
    assert root == pytest.approx(math.sqrt(3) - 1, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(beta=st.floats(0.01, 50.0))
def test_threshold_closed_form(beta):
    assert interface_threshold(beta) == pytest.approx(threshold_closed_form(beta), abs=1e-10)


def test_threshold_small_beta_tends_to_one():
    assert interface_threshold(1e-6) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ValueError):
        interface_threshold(0.0)


def test_numeric_examples():
    e, ell, tag = solve_1d_numeric(1.0, 0.2, 4096)
    assert tag == "bridged" and abs(ell - 0.625) <= 1e-3
    e, ell, tag = solve_1d_numeric(1.0, 2.0)
    assert tag == "disjoint" and abs(e - 4.0) <= 1e-6
    e, ell, tag = solve_1d_numeric(2.0, 0.0, 4096)
    assert abs(e - 3.0) <= 1e-3
    with pytest.raises(ValueError):
        solve_1d_numeric(1.0, 0.1, n=8)


@pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
def test_crossover_consistency(beta):
    e0 = interface_threshold(beta)
    assert solve_1d_numeric(beta, 0.9 * e0, 1024)[2] == "bridged"
    assert solve_1d_numeric(beta, e0 + 0.05, 1024)[2] == "disjoint"


def test_one_phase_wedge_slope():
    # a unit wedge from 1 to 0 has slope 1 = sqrt(Lambda) and energy 1 + 1
    x, e = golden_section(lambda L: 1.0 / L + L, 0.01, 5.0)
    assert x == pytest.approx(1.0, abs=1e-6) and e == pytest.approx(2.0, abs=1e-12)


def test_sweep_rows_winner_flips_at_threshold():
    epss = np.linspace(0.0, 1.5, 31)
    rows = sweep_rows([1.0], epss)
    e0 = math.sqrt(3) - 1
    for r in rows:
        assert r["winner"] == ("bridged" if r["eps"] < e0 else "disjoint")
        assert r["eps0_for_beta"] == pytest.approx(e0, abs=1e-11)
