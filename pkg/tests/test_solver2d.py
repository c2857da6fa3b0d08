import math

import numpy as np
import pytest
from scipy import ndimage

from helpers import box_grid, strip_1d_state
from robinfb.core import Disk, Label, ProblemSpec, Rect, State, face_pairs, phase_of
from robinfb.energy import total_energy
from robinfb.solver1d import optimal_ell
from robinfb.solver2d import (
    SolverError,
    SolverParams,
    continuation,
    flip_deltas,
    initial_state,
    label_sweep,
    minimize_at_eps,
    u_step,
)


def n_interface(state):
    p = phase_of(state.labels).ravel()
    a, b, _ = face_pairs(state.grid)
    return int(np.count_nonzero(p[a] * p[b] == 2))


def strip_spec(eps_gap, cells_gap=496, pad=8, ny=16, beta=1.0):
    """Two fixed slabs a distance ``2 + 2 eps_gap`` apart on a periodic strip."""
    h = (2 + 2 * eps_gap) / cells_gap
    nx = cells_gap + 2 * pad
    L, H = nx * h, ny * h
    return ProblemSpec(
        box=(0.0, 0.0, L, H),
        resolution=nx,
        shapes_E1=(Rect((0.0, 0.0), (pad * h, H)),),
        shapes_E2=(Rect((L - pad * h, 0.0), (pad * h, H)),),
        beta=beta,
        lam=1.0,
        strip=True,
    )


def small_two_disks(res=64):
    return ProblemSpec(
        shapes_E1=(Disk((0.34, 0.5), 0.1),),
        shapes_E2=(Disk((0.66, 0.5), 0.1),),
        beta=1.0,
        lam=1.0 / (0.22 * math.log(2.2)) ** 2,
        resolution=res,
    )


@pytest.fixture(scope="module")
def two_disk_solution():
    spec = small_two_disks()
    params = SolverParams(eps_steps=3)
    state, trace = continuation(spec, params)
    return spec, params, state, trace


# --------------------------------------------------------------------------
# u-step


def test_u_step_without_free_cells_is_identity():
    spec = small_two_disks()
    from robinfb.core import rasterize

    s = rasterize(spec)
    assert u_step(s, 1.0) is s


def test_u_step_annulus_log_profile():
    n = 128
    g = box_grid(n)
    X, Y = g.centers()
    r = np.hypot(X - 0.5, Y - 0.5)
    a, R = 0.1, 0.4
    lab = np.where(r <= a, Label.E1, np.where(r < R, Label.OMEGA1, Label.NONE)).astype(np.int8)
    s = State(g, (lab == Label.E1).astype(float), lab)
    s = u_step(s, 0.0)
    ring = lab == Label.OMEGA1
    err = np.abs(s.u[ring] - np.log(R / r[ring]) / math.log(R / a))
    # staircase boundaries cost O(h) near the rims
    assert err.max() <= 6 * g.h
    assert err.mean() <= g.h


def test_u_step_strip_trace_matches_closed_form():
    beta, eps = 1.0, 0.2
    s = strip_1d_state(beta, eps, n_per_unit=128)
    free = (s.labels == Label.OMEGA1) | (s.labels == Label.OMEGA2)
    s = u_step(s.replace(u=np.where(free, 0.0, s.u)), beta)
    p = phase_of(s.labels)[0]
    k = int(np.nonzero(p[:-1] * p[1:] == 2)[0][0])
    trace = 0.5 * (s.u[0, k] + s.u[0, k + 1])
    assert abs(trace - optimal_ell(beta, eps)) <= 5 * s.grid.h


def test_u_step_unreachable_tolerance_raises():
    s = strip_1d_state(1.0, 0.2, n_per_unit=64)
    with pytest.raises(SolverError) as exc:
        u_step(s, 1.0, u_tol=1e-300)
    assert exc.value.residual is not None


# --------------------------------------------------------------------------
# label moves


def test_isolated_zero_cell_is_dropped():
    g = box_grid(16)
    lab = np.zeros((16, 16), dtype=np.int8)
    lab[8, 8] = Label.OMEGA1
    s = State(g, np.zeros((16, 16)), lab)
    out, n = label_sweep(s, 1.0, 1.0, 0.0, np.random.default_rng(0))
    assert n == 1 and out.labels[8, 8] == Label.NONE


def test_flip_deltas_match_brute_force():
    rng = np.random.default_rng(5)
    n = 8
    g = box_grid(n)
    lab = rng.choice([Label.NONE, Label.OMEGA1, Label.OMEGA2], size=(n, n)).astype(np.int8)
    lab[0, :] = lab[-1, :] = lab[:, 0] = lab[:, -1] = Label.NONE
    lab[2, 2] = Label.E1
    lab[5, 5] = Label.E2
    u = rng.random((n, n)) * (lab != Label.NONE)
    u[lab >= Label.E1] = 1.0
    s = State(g, u, lab)
    beta, lam, eps = 1.3, 2.0, 0.4
    delta, unew = flip_deltas(s, beta, lam, eps)
    base = total_energy(s, beta, lam, eps).total_J_eps
    targets = [Label.NONE, Label.OMEGA1, Label.OMEGA2]
    checked = 0
    for j in range(n):
        for i in range(n):
            for q in range(3):
                if not np.isfinite(delta[q, j, i]):
                    continue
                l2 = lab.copy()
                u2 = u.copy()
                l2[j, i] = targets[q]
                u2[j, i] = unew[q, j, i]
                e = total_energy(State(g, u2, l2), beta, lam, eps).total_J_eps
                assert delta[q, j, i] == pytest.approx(e - base, abs=1e-12)
                checked += 1
    assert checked > 50


def test_flip_value_minimizes_local_energy():
    g = box_grid(8)
    lab = np.zeros((8, 8), dtype=np.int8)
    lab[3:5, 2:4] = Label.OMEGA1
    u = np.where(lab > 0, 0.6, 0.0)
    s = State(g, u, lab)
    delta, unew = flip_deltas(s, 0.0, 0.0, 0.0)
    t = unew[1, 3, 4]
    # one neighbour at 0.6 and three at 0: Dirichlet minimizer is the mean
    assert t == pytest.approx(0.15)
    for dt in (-0.01, 0.01):
        u2 = u.copy()
        lab2 = lab.copy()
        lab2[3, 4] = Label.OMEGA1
        u2[3, 4] = t + dt
        e = total_energy(State(g, u2, lab2), 0.0, 0.0).total_J
        assert e > total_energy(s, 0.0, 0.0).total_J + delta[1, 3, 4]


def test_converged_state_has_no_improving_flip(two_disk_solution):
    spec, params, state, trace = two_disk_solution
    eps = params.schedule()[-1]
    assert trace.records[-1]["flips"] == 0 or trace.records[-1]["eps"] == eps
    again, trace2 = minimize_at_eps(state, spec.beta, spec.lam, eps, params)
    assert trace2.records[-1]["flips"] == 0
    _, n = label_sweep(again, spec.beta, spec.lam, eps, np.random.default_rng(1))
    assert n == 0


def test_energy_descends_within_each_level(two_disk_solution):
    _, _, _, trace = two_disk_solution
    by_eps = {}
    for r in trace.records:
        by_eps.setdefault(r["eps"], []).append(r["energy"].total_J_eps)
    for vals in by_eps.values():
        v = np.array(vals)
        assert np.all(np.diff(v) <= 1e-12 * max(1.0, abs(v[0])))


# --------------------------------------------------------------------------
# minimality properties of the solution


def test_truncation_does_not_lower_energy(two_disk_solution):
    spec, _, state, _ = two_disk_solution
    e = total_energy(state, spec.beta, spec.lam).total_J
    free = (state.labels == Label.OMEGA1) | (state.labels == Label.OMEGA2)
    for t in (0.2, 0.5, 0.8):
        v = np.where(free, np.minimum(state.u, t), state.u)
        assert total_energy(state.replace(u=v), spec.beta, spec.lam).total_J >= e - 1e-9


def test_outward_layer_does_not_lower_energy(two_disk_solution):
    spec, params, state, _ = two_disk_solution
    eps = params.schedule()[-1]
    e = total_energy(state, spec.beta, spec.lam, eps).total_J_eps
    p = phase_of(state.labels)
    lab = state.labels.copy()
    for q, name in ((1, Label.OMEGA1), (2, Label.OMEGA2)):
        grow = ndimage.binary_dilation(p == q) & (lab == Label.NONE)
        grow[0, :] = grow[-1, :] = grow[:, 0] = grow[:, -1] = False
        lab[grow] = name
    bigger = u_step(state.replace(labels=lab), spec.beta, spec.lam)
    assert total_energy(bigger, spec.beta, spec.lam, eps).total_J_eps >= e - 1e-9


def test_two_close_disks_bridge(two_disk_solution):
    _, _, state, trace = two_disk_solution
    assert n_interface(state) > 0
    assert set(trace.basins) == {"nearest", "bridged"}


# --------------------------------------------------------------------------
# continuation outcomes


def test_strip_above_threshold_is_disjoint():
    # eps0(1) = sqrt(3) - 1 < 1
    spec = strip_spec(1.0, cells_gap=248, ny=8)
    state, _ = continuation(spec, SolverParams(eps_steps=3))
    assert n_interface(state) == 0
    e = total_energy(state, 1.0, 1.0)
    H = state.grid.ny * state.grid.h
    assert e.interface == 0.0
    assert e.total_J / H == pytest.approx(4.0, rel=0.05)


def test_continuation_is_deterministic():
    spec = small_two_disks(48)
    a, ta = continuation(spec, SolverParams(eps_steps=2))
    b, tb = continuation(spec, SolverParams(eps_steps=2))
    assert a.fingerprint() == b.fingerprint()
    assert ta.csv_rows() == tb.csv_rows()


def test_one_phase_solution_is_radial():
    lam = 1.0 / (0.3 * math.log(3.0)) ** 2
    spec = ProblemSpec(shapes_E1=(Disk((0.5, 0.5), 0.1),), one_phase_mode=True, lam=lam, resolution=96)
    state, _ = continuation(spec, SolverParams(eps_steps=3))
    g = state.grid
    X, Y = g.centers()
    pos = state.labels == Label.OMEGA1
    edge = pos & ndimage.binary_dilation(state.labels == Label.NONE)
    r = np.hypot(X[edge] - 0.5, Y[edge] - 0.5)
    assert r.max() - r.min() <= 2 * g.h + math.sqrt(2) * g.h


def test_initial_state_assigns_nearest_set():
    spec = small_two_disks()
    s = initial_state(spec, 0.05)
    X, _ = s.grid.centers()
    assert np.all(X[s.labels == Label.OMEGA1] < 0.5)
    assert np.all(X[s.labels == Label.OMEGA2] > 0.5)
    assert n_interface(s) == 0
