"""Alternating minimization of the discrete J_eps and continuation in eps.

One alternation step solves for ``u`` with the labels frozen (a sparse SPD
system), then improves the labels with ``u`` frozen.  Label moves come in
three kinds, all of them accepted only on an exact energy decrease:

* single-cell flips, evaluated in closed form for every cell of one
  checkerboard colour at once (cells of one colour share no face, so their
  flips are independent and can be applied together);
* 2x2 block relabelings between the two phases along the interface;
* batch front moves that grow or shrink the positivity set by a layer of
  cells where the free-boundary gradient is off balance, verified by a full
  re-solve for ``u``.  Single flips alone pin the free boundary well away
  from the balance ``|grad u| = sqrt(Lambda)``.
"""

from __future__ import annotations

import csv
import itertools
import logging
import warnings
from dataclasses import dataclass, field
from dataclasses import replace as dc_replace

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.ndimage import distance_transform_edt

from .core import GeometryError, Label, ProblemSpec, State, boundary_ring, face_pairs, phase_of, rasterize
from .diagnostics import labeled_gradient
from .energy import CSV_HEADER, EnergyBreakdown, total_energy

__all__ = [
    "SolverParams",
    "SolveTrace",
    "SolverError",
    "u_step",
    "label_sweep",
    "block_sweep",
    "front_sweep",
    "front_gradient",
    "minimize_at_eps",
    "initial_state",
    "continuation",
    "prolong_labels",
    "support_touches_margin",
]

logger = logging.getLogger(__name__)

# strict-decrease threshold for accepting a move
_DESCENT_TOL = 1e-13

_DIRS = ((0, 1), (0, -1), (1, 1), (1, -1))  # (axis, shift) for np.roll


class SolverError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class SolverParams:
    eps0: float = 0.02
    eps_factor: float = 0.5
    eps_steps: int = 5
    u_tol: float = 1e-10
    max_sweeps: int = 400
    seed: int = 0
    anneal: bool = False
    temperature: float = 0.0
    r_init: float | None = None
    init: str = "both"
    front_tol: float = 0.05
    u_floor: float = 1e-10
    coarse_levels: int = 2

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be > 0")
        if not 0 < self.eps_factor < 1:
            raise ValueError("eps_factor must lie in (0, 1)")
        if not self.u_tol > 0:
            raise ValueError("u_tol must be > 0")
        if self.eps_steps < 1:
            raise ValueError("eps_steps must be >= 1")
        if self.coarse_levels < 0:
            raise ValueError("coarse_levels must be >= 0")
        if self.init not in ("both", "nearest", "bridged"):
            raise ValueError("init must be 'both', 'nearest' or 'bridged'")

    def schedule(self):
        return [self.eps0 * self.eps_factor**k for k in range(self.eps_steps)]

    def to_dict(self):
        from dataclasses import asdict

        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    states: dict = field(default_factory=dict)
    basins: dict = field(default_factory=dict)

    def record(self, eps, sweep, flips, e: EnergyBreakdown):
        self.records.append({"eps": eps, "sweep": sweep, "flips": flips, "energy": e})

    def csv_rows(self):
        header = ["eps", "sweep", "flips"] + CSV_HEADER
        rows = [header]
        for r in self.records:
            e = r["energy"]
            rows.append([format(r["eps"], ".17g"), str(r["sweep"]), str(r["flips"])] + e.csv_row())
        return rows

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.csv_rows())


# --------------------------------------------------------------------------
# u-step


def _free_mask(labels):
    return (labels == Label.OMEGA1) | (labels == Label.OMEGA2)


def u_step(state: State, beta: float, lam: float = 0.0, u_tol: float = 1e-10) -> State:
    """Minimize Dirichlet + beta * interface over u on the labeled free cells.

    ``lam`` does not enter: the volume term is carried by the labels.
    """
    grid = state.grid
    lab = state.labels.ravel()
    free = _free_mask(lab)
    nf = int(np.count_nonzero(free))
    if nf == 0:
        return state
    idx = np.full(lab.size, -1, dtype=np.int64)
    idx[free] = np.arange(nf)
    u = state.u.ravel()
    a, b, _ = face_pairs(grid)
    p = phase_of(lab)
    c = np.where((p[a] * p[b]) == 2, 0.25 * beta * grid.h, 0.0)

    keep = free[a] | free[b]
    a, b, c = a[keep], b[keep], c[keep]
    fa, fb = free[a], free[b]
    diag = np.zeros(nf)
    np.add.at(diag, idx[a[fa]], 1.0 + c[fa])
    np.add.at(diag, idx[b[fb]], 1.0 + c[fb])
    both = fa & fb
    off_r = np.concatenate([idx[a[both]], idx[b[both]]])
    off_c = np.concatenate([idx[b[both]], idx[a[both]]])
    off_v = np.concatenate([c[both] - 1.0, c[both] - 1.0])
    rhs = np.zeros(nf)
    only_a = fa & ~fb
    only_b = fb & ~fa
    np.add.at(rhs, idx[a[only_a]], (1.0 - c[only_a]) * u[b[only_a]])
    np.add.at(rhs, idx[b[only_b]], (1.0 - c[only_b]) * u[a[only_b]])

    rows = np.concatenate([np.arange(nf), off_r])
    cols = np.concatenate([np.arange(nf), off_c])
    vals = np.concatenate([diag, off_v])
    K = sp.csr_matrix((vals, (rows, cols)), shape=(nf, nf))
    # local weighting avoids pyamg's randomized spectral-radius estimate
    ml = pyamg.smoothed_aggregation_solver(K, symmetry="symmetric", smooth=("jacobi", {"omega": 4.0 / 3.0, "weighting": "local"}))
    x = ml.solve(rhs, x0=u[free].copy(), tol=0.1 * u_tol, maxiter=500, accel="cg")
    scale = max(np.linalg.norm(rhs), 1e-300)
    res = np.linalg.norm(K @ x - rhs) / scale
    if res > u_tol:
        raise SolverError(f"u-step residual {res:.3e} above tolerance {u_tol:.1e}", res)
    unew = u.copy()
    unew[free] = np.clip(x, 0.0, state.g_value)
    return state.replace(u=unew.reshape(grid.shape))


# --------------------------------------------------------------------------
# single-cell flips


def _candidates(state: State):
    lab = state.labels
    fixed = (lab == Label.E1) | (lab == Label.E2)
    return ~fixed & ~boundary_ring(state.grid)


def _colours(grid):
    j, i = np.indices(grid.shape)
    col = (i + j) % 2
    if grid.periodic_y and grid.ny % 2 == 1:
        col = col + 2 * (j == grid.ny - 1)
    return col


def flip_deltas(state: State, beta: float, lam: float, eps: float):
    """Exact energy change of relabeling each cell to NONE, OMEGA1, OMEGA2.

    Returns ``(delta, unew)`` with shape ``(3, ny, nx)``; entry ``k`` is the
    change of J_eps for target label ``k`` and the value ``u`` takes there.
    Relabeling to NONE sets ``u = 0``; relabeling an unlabeled cell into a
    phase gives it the value minimizing its local energy; switching phase
    keeps ``u``.  Entries for forbidden or identical targets are ``+inf``.
    """
    g = state.grid
    h = g.h
    u = state.u
    p = phase_of(state.labels)
    nb_u = [np.roll(u, s, axis=ax) for ax, s in _DIRS]
    nb_p = [np.roll(p, s, axis=ax) for ax, s in _DIRS]
    cand = _candidates(state)
    bh = beta * h

    delta = np.full((3,) + g.shape, np.inf)
    unew = np.zeros((3,) + g.shape)
    for q in (0, 1, 2):
        if q == 0:
            t_new = np.zeros_like(u)
        else:
            m = sum(((pn != 0) & (pn != q)).astype(float) for pn in nb_p)
            S = sum(nb_u)
            Sif = sum(np.where((pn != 0) & (pn != q), un, 0.0) for un, pn in zip(nb_u, nb_p))
            local = (2.0 * S - 0.5 * bh * Sif) / (8.0 + 0.5 * bh * m)
            local = np.clip(local, 0.0, state.g_value)
            t_new = np.where(p == 0, local, u)
        d = np.zeros_like(u)
        for un, pn in zip(nb_u, nb_p):
            d += (t_new - un) ** 2 - (u - un) ** 2
            if beta:
                new_if = (q != 0) & (pn != 0) & (pn != q)
                old_if = (p != 0) & (pn != 0) & (pn != p)
                d += bh * (
                    np.where(new_if, 0.25 * (t_new + un) ** 2, 0.0)
                    - np.where(old_if, 0.25 * (u + un) ** 2, 0.0)
                )
            if eps:
                dp = (
                    ((q == 1) != (pn == 1)).astype(float)
                    + ((q == 2) != (pn == 2))
                    - ((p == 1) != (pn == 1))
                    - ((p == 2) != (pn == 2))
                )
                d += eps * h * dp
        d += lam * h * h * (float(q != 0) - (p != 0))
        ok = cand & (p != q)
        delta[q] = np.where(ok, d, np.inf)
        unew[q] = t_new
    return delta, unew


def label_sweep(state: State, beta: float, lam: float, eps: float, rng, anneal=False, temperature=0.0):
    """One pass of single-cell flips over both checkerboard colours.

    The colours are visited in an order drawn from ``rng``; within a colour
    all flips are independent.  Returns ``(state, n_flips)``.
    """
    colours = _colours(state.grid)
    order = rng.permutation(int(colours.max()) + 1)
    u = state.u.copy()
    lab = state.labels.copy()
    nflips = 0
    for c in order:
        cur = state.replace(u=u, labels=lab)
        delta, unew = flip_deltas(cur, beta, lam, eps)
        sel = colours == c
        if anneal and temperature > 0:
            pick = rng.integers(0, 3, size=lab.shape)
            dsel = np.take_along_axis(delta, pick[None], 0)[0]
            finite = np.isfinite(dsel)
            acc = np.zeros(lab.shape, dtype=bool)
            with np.errstate(over="ignore"):
                prob = np.exp(-np.clip(dsel, 0.0, None) / temperature)
            acc[finite] = rng.random(np.count_nonzero(finite)) < prob[finite]
            best = pick
            do = sel & finite & acc & (dsel != 0)
        else:
            best = np.argmin(delta, axis=0)
            dbest = np.take_along_axis(delta, best[None], 0)[0]
            do = sel & (dbest < -_DESCENT_TOL)
        if not do.any():
            continue
        newlab = np.array([Label.NONE, Label.OMEGA1, Label.OMEGA2], dtype=np.int8)[best]
        newu = np.take_along_axis(unew, best[None], 0)[0]
        lab = np.where(do, newlab, lab)
        u = np.where(do, newu, u)
        nflips += int(np.count_nonzero(do))
    return state.replace(u=u, labels=lab), nflips


# --------------------------------------------------------------------------
# 2x2 block relabelings between phases


def _local_cost(p, u, cells, beta, eps, h, ny, nx, periodic):
    """beta*interface + eps*perimeter restricted to faces touching ``cells``."""
    seen = set()
    total = 0.0
    for j, i in cells:
        for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            jj, ii = j + dj, i + di
            if periodic:
                jj %= ny
            key = (min((j, i), (jj, ii)), max((j, i), (jj, ii)))
            if key in seen:
                continue
            seen.add(key)
            pa = p[j, i]
            pb = p[jj, ii]
            if pa and pb and pa != pb:
                t = 0.5 * (u[j, i] + u[jj, ii])
                total += beta * h * t * t
            total += eps * h * (((pa == 1) != (pb == 1)) + ((pa == 2) != (pb == 2)))
    return total


def block_sweep(state: State, beta: float, eps: float, rng):
    """Best 2x2 relabeling between OMEGA1 and OMEGA2 on blocks at the interface."""
    g = state.grid
    lab = state.labels.copy()
    p = phase_of(lab)
    u = state.u
    free = _free_mask(lab)
    iface = np.zeros(g.shape, dtype=bool)
    for ax, s in _DIRS:
        pn = np.roll(p, s, axis=ax)
        iface |= (p != 0) & (pn != 0) & (pn != p)
    iface &= free
    blk = free[:-1, :-1] & free[1:, :-1] & free[:-1, 1:] & free[1:, 1:]
    near = iface[:-1, :-1] | iface[1:, :-1] | iface[:-1, 1:] | iface[1:, 1:]
    js, is_ = np.nonzero(blk & near)
    if js.size == 0:
        return state, 0
    order = rng.permutation(js.size)
    patterns = list(itertools.product((1, 2), repeat=4))
    nflips = 0
    for k in order:
        j, i = int(js[k]), int(is_[k])
        cells = [(j, i), (j, i + 1), (j + 1, i), (j + 1, i + 1)]
        if not all(p[c] in (1, 2) and lab[c] in (Label.OMEGA1, Label.OMEGA2) for c in cells):
            continue
        cur = tuple(int(p[c]) for c in cells)
        base = _local_cost(p, u, cells, beta, eps, g.h, g.ny, g.nx, g.periodic_y)
        best, best_d = None, -_DESCENT_TOL
        for pat in patterns:
            if pat == cur:
                continue
            for c, v in zip(cells, pat):
                p[c] = v
            d = _local_cost(p, u, cells, beta, eps, g.h, g.ny, g.nx, g.periodic_y) - base
            if d < best_d:
                best, best_d = pat, d
        for c, v in zip(cells, best or cur):
            p[c] = v
            lab[c] = Label.OMEGA1 if v == 1 else Label.OMEGA2
        if best is not None:
            nflips += sum(a != b for a, b in zip(best, cur))
    return state.replace(labels=lab), nflips


# --------------------------------------------------------------------------
# batch front moves


def front_gradient(state: State) -> np.ndarray:
    """``|grad u|`` on labeled cells next to an unlabeled one, NaN elsewhere.

    Differences are taken toward labeled cells only, so staircase corners of
    the discrete front are not biased low.
    """
    lab = state.labels
    free = _free_mask(lab)
    none = lab == Label.NONE
    touch = np.zeros_like(free)
    for ax, s in _DIRS:
        touch |= np.roll(none, s, axis=ax)
    out = np.full(state.u.shape, np.nan)
    m = free & touch & ~boundary_ring(state.grid)
    out[m] = labeled_gradient(state)[m]
    return out


def _front_proposals(state: State, lam: float, tol: float):
    G = front_gradient(state)
    press = G**2 / lam - 1.0
    lab = state.labels
    none = (lab == Label.NONE) & ~boundary_ring(state.grid)
    p = phase_of(lab)
    u = state.u

    grow_press = np.full(u.shape, -np.inf)
    grow_phase = np.zeros(u.shape, dtype=np.int8)
    best_u = np.full(u.shape, -np.inf)
    for ax, s in _DIRS:
        pn = np.roll(press, s, axis=ax)
        phn = np.roll(p, s, axis=ax)
        un = np.roll(u, s, axis=ax)
        valid = none & np.isfinite(pn)
        grow_press = np.where(valid & (pn > grow_press), pn, grow_press)
        upd = valid & (un > best_u)
        grow_phase = np.where(upd, phn, grow_phase)
        best_u = np.where(upd, un, best_u)
    grow = none & (grow_press > tol) & (grow_phase > 0)
    shrink = np.isfinite(press) & (press < -tol)

    gi = np.flatnonzero(grow)
    si = np.flatnonzero(shrink)
    cells = np.concatenate([gi, si])
    score = np.concatenate([grow_press.ravel()[gi], -press.ravel()[si]])
    newlab = np.concatenate([grow_phase.ravel()[gi], np.zeros(si.size, dtype=np.int8)])
    order = np.lexsort((cells, -score))
    is_grow = np.concatenate([np.ones(gi.size, bool), np.zeros(si.size, bool)])[order]
    return cells[order], newlab[order], is_grow


def front_sweep(state: State, beta: float, lam: float, eps: float, u_tol: float, tol: float, e_now=None):
    """Grow/shrink the positivity set where ``|grad u|**2`` is off ``Lambda``.

    Tries the whole proposal, then the grow moves alone, then the shrink
    moves alone; each set is cut to its most unbalanced half, quarter, ...
    (down to 1/16) until one lowers J_eps after re-solving for ``u``.
    Returns ``(state, n_flips, energy)``.
    """
    if e_now is None:
        e_now = total_energy(state, beta, lam, eps)
    cells, newlab, is_grow = _front_proposals(state, lam, tol)
    phase_to_label = np.array([Label.NONE, Label.OMEGA1, Label.OMEGA2], dtype=np.int8)
    subsets = [np.ones(cells.size, bool), is_grow, ~is_grow]
    tried = set()
    for sub in subsets:
        c_sub, l_sub = cells[sub], newlab[sub]
        n = c_sub.size
        n_min = max(1, c_sub.size // 16)
        while n >= n_min:
            key = c_sub[:n].tobytes()
            if key in tried:
                n //= 2
                continue
            tried.add(key)
            lab = state.labels.ravel().copy()
            u = state.u.ravel().copy()
            lab[c_sub[:n]] = phase_to_label[l_sub[:n]]
            u[c_sub[:n]] = 0.0
            trial = state.replace(u=u.reshape(state.grid.shape), labels=lab.reshape(state.grid.shape))
            trial = u_step(trial, beta, lam, u_tol)
            e_trial = total_energy(trial, beta, lam, eps)
            if e_trial.total_J_eps < e_now.total_J_eps - _DESCENT_TOL:
                return trial, n, e_trial
            n //= 2
    return state, 0, e_now


# --------------------------------------------------------------------------
# alternation and continuation


def minimize_at_eps(state: State, beta: float, lam: float, eps: float, params: SolverParams, rng=None, trace=None):
    """Alternate u-steps and label moves at fixed ``eps`` until no move helps."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    if trace is None:
        trace = SolveTrace()
    state = u_step(state, beta, lam, params.u_tol)
    e = total_energy(state, beta, lam, eps)
    trace.record(eps, 0, 0, e)
    for sweep in range(1, params.max_sweeps + 1):
        state, n_local = label_sweep(state, beta, lam, eps, rng, params.anneal, params.temperature)
        state, n_block = block_sweep(state, beta, eps, rng)
        if n_local or n_block:
            state = u_step(state, beta, lam, params.u_tol)
            e = total_energy(state, beta, lam, eps)
        state, n_front, e = front_sweep(state, beta, lam, eps, params.u_tol, params.front_tol, e)
        flips = n_local + n_block + n_front
        trace.record(eps, sweep, flips, e)
        if flips == 0:
            break
    else:
        logger.warning("eps=%g: max_sweeps reached without convergence", eps)
    trace.states[eps] = state
    return state, trace


def _dilated_labels(base: State, radius: float) -> np.ndarray:
    g = base.grid
    lab = base.labels
    d1 = distance_transform_edt(lab != Label.E1, sampling=g.h)
    if np.any(lab == Label.E2):
        d2 = distance_transform_edt(lab != Label.E2, sampling=g.h)
    else:
        d2 = np.full(lab.shape, np.inf)
    out = lab.copy()
    grow = (lab == Label.NONE) & (np.minimum(d1, d2) <= radius) & ~boundary_ring(g)
    out[grow & (d1 <= d2)] = Label.OMEGA1
    out[grow & (d2 < d1)] = Label.OMEGA2
    return out


def initial_state(spec: ProblemSpec, radius: float) -> State:
    """Fixed sets dilated by ``radius``, each new cell given to its nearest set."""
    base = rasterize(spec)
    return base.replace(labels=_dilated_labels(base, radius))


def _init_radii(spec: ProblemSpec, params: SolverParams, h: float):
    dist = spec.e_distance()
    if dist is None or spec.one_phase_mode and not spec.shapes_E2:
        r = params.r_init if params.r_init is not None else 0.3 * max(s.diameter for s in spec.shapes_E1)
        return {"nearest": r}
    r = params.r_init if params.r_init is not None else 0.3 * dist
    radii = {}
    if params.init in ("both", "nearest"):
        radii["nearest"] = r
    if params.init in ("both", "bridged"):
        radii["bridged"] = 0.5 * dist + 2.0 * h
    return radii


def support_touches_margin(state: State, width: int = 2) -> bool:
    """True when a labeled cell lies within ``width`` cells of a non-periodic box side."""
    free = _free_mask(state.labels)
    w = width
    edge = np.zeros(free.shape, dtype=bool)
    edge[:, :w] = edge[:, -w:] = True
    if not state.grid.periodic_y:
        edge[:w, :] = edge[-w:, :] = True
    return bool((free & edge).any())


def _cleanup(state: State, beta, lam, eps, params):
    """Drop labeled cells where u did not become positive."""
    free = _free_mask(state.labels)
    dead = free & (state.u <= params.u_floor)
    if not dead.any():
        return state
    lab = np.where(dead, Label.NONE, state.labels).astype(np.int8)
    u = np.where(dead, 0.0, state.u)
    return u_step(state.replace(u=u, labels=lab), beta, lam, params.u_tol)


def _run_schedule(init: State, spec: ProblemSpec, params: SolverParams):
    rng = np.random.default_rng(params.seed)
    trace = SolveTrace()
    state = init
    for eps in params.schedule():
        state, trace = minimize_at_eps(state, spec.beta, spec.lam, eps, params, rng, trace)
    state = _cleanup(state, spec.beta, spec.lam, params.schedule()[-1], params)
    trace.states[params.schedule()[-1]] = state
    return state, trace


def prolong_labels(coarse: State, fine: State) -> np.ndarray:
    """Labels for ``fine`` read off a coarse solution at fine cell centres.

    Fixed-set cells keep their fine rasterization; cells of the box ring stay
    unlabeled.
    """
    X, Y = fine.grid.centers()
    cg = coarse.grid
    ci = np.clip(np.floor((X - cg.origin[0]) / cg.h).astype(int), 0, cg.nx - 1)
    cj = np.clip(np.floor((Y - cg.origin[1]) / cg.h).astype(int), 0, cg.ny - 1)
    p = phase_of(coarse.labels)[cj, ci]
    out = fine.labels.copy()
    open_ = (out == Label.NONE) & ~boundary_ring(fine.grid)
    out[open_ & (p == 1)] = Label.OMEGA1
    out[open_ & (p == 2)] = Label.OMEGA2
    return out


def _coarse_specs(spec: ProblemSpec, levels: int):
    out = []
    for k in range(levels, 0, -1):
        res = spec.resolution // 2**k
        if res < 16:
            continue
        cs = dc_replace(spec, resolution=res)
        try:
            cb = rasterize(cs)
        except GeometryError:
            continue
        if min(cb.grid.shape) < 16:
            continue
        out.append((cs, cb))
    return out


def continuation(spec: ProblemSpec, params: SolverParams):
    """Run the eps schedule with warm starts; returns ``(state, trace)``.

    With ``init="both"`` (and two fixed sets) the schedule runs once from a
    small dilation, which sits in the basin of disjoint supports, and once
    from a dilation whose two halves touch, which sits in the bridged basin;
    the lower final J_eps wins.  ``trace.basins`` keeps both final energies.

    With ``coarse_levels > 0`` each run first goes through the whole
    schedule on grids of 1/2**k the resolution, and the fine run starts from
    the prolonged coarse labels; the trace covers the fine run only.
    """
    base = rasterize(spec)
    coarse = _coarse_specs(spec, params.coarse_levels)
    eps_final = params.schedule()[-1]
    best = None
    basins = {}
    for name in _init_radii(spec, params, base.grid.h):
        state = None
        for cs, cb in coarse + [(spec, base)]:
            if state is None:
                r = _init_radii(cs, params, cb.grid.h)[name]
                init = cb.replace(labels=_dilated_labels(cb, r))
            else:
                init = cb.replace(labels=prolong_labels(state, cb))
            state, trace = _run_schedule(init, cs, params)
        e = total_energy(state, spec.beta, spec.lam, eps_final)
        basins[name] = e
        if best is None or e.total_J_eps < best[2].total_J_eps:
            best = (state, trace, e)
    state, trace, _ = best
    trace.basins = basins
    if not spec.strip and support_touches_margin(state):
        warnings.warn("positivity set reaches the margin ring; enlarge the box", RuntimeWarning)
    return state, trace
