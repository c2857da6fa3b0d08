"""Read-only measurements on computed states.

Ball-based diagnostics (Weiss energy, blow-ups, density, growth) are centred
at free-boundary sample points: centres of unlabeled cells that share a face
with a labeled cell, optionally snapped onto the interpolated zero level.
Inside a ball, ``u`` is read through a level field that continues ``u``
linearly (and negatively) into the unlabeled band, so the interpolated
positivity set does not bulge half a cell past the discrete one.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize_scalar
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import spsolve
from skimage.measure import find_contours

from .core import Grid, Label, State, phase_of
from .energy import interface_integral, phase_perimeters

__all__ = [
    "DiagnosticsReport",
    "TopologyError",
    "free_boundary_points",
    "free_boundary_residual",
    "labeled_gradient",
    "robin_residual",
    "weiss_energy",
    "weiss_decay_fit",
    "blow_up_error",
    "density_and_growth",
    "holder_seminorm",
    "non_collapsing_check",
    "conformal_flatten",
    "contact_angle",
    "interface_local_minimality_check",
    "theta",
]


class TopologyError(ValueError):
    pass


def theta(lam: float) -> float:
    """Weiss energy of a half-plane solution in d = 2."""
    return lam * math.pi / 2.0


def _labeled(state: State) -> np.ndarray:
    return phase_of(state.labels) > 0


def _free(state: State) -> np.ndarray:
    lab = state.labels
    return (lab == Label.OMEGA1) | (lab == Label.OMEGA2)


def _shift(a, dj, di, fill):
    """``out[j, i] = a[j + dj, i + di]`` with ``fill`` outside the array."""
    out = np.full_like(a, fill)
    ny, nx = a.shape
    js = slice(max(-dj, 0), ny - max(dj, 0))
    is_ = slice(max(-di, 0), nx - max(di, 0))
    jd = slice(max(dj, 0), ny + min(dj, 0) if dj < 0 else ny)
    id_ = slice(max(di, 0), nx + min(di, 0) if di < 0 else nx)
    out[js, is_] = a[jd, id_]
    return out


def _near_both_phases(state: State, radius: int = 2) -> np.ndarray:
    p = phase_of(state.labels)
    size = 2 * radius + 1
    has1 = ndimage.maximum_filter((p == 1).astype(np.int8), size=size, mode="constant") > 0
    has2 = ndimage.maximum_filter((p == 2).astype(np.int8), size=size, mode="constant") > 0
    return has1 & has2


_LEVEL_CACHE: dict = {}


def _level_field(state: State):
    """``u`` continued linearly into the unlabeled band.

    Each unlabeled cell gets the value at its centre of the least-squares
    plane through the positive free cells of its 5x5 window, clipped to
    ``<= 0``.  Returns ``(phi, dist, normal)``: ``dist`` is the distance in
    cells from the centre to the plane's zero line (``inf`` where no plane
    fits) and ``normal`` the plane's unit normal into the positive side.
    """
    key = state.fingerprint()
    hit = _LEVEL_CACHE.get(key)
    if hit is not None:
        return hit
    u = state.u
    w = (_free(state) & (u > 0)).astype(float)
    S = np.zeros((9,) + u.shape)
    for dj in range(-2, 3):
        for di in range(-2, 3):
            m = _shift(w, dj, di, 0.0)
            v = _shift(u, dj, di, 0.0) * m
            x, y = float(di), float(dj)
            S += np.stack([m, m * x, m * y, m * x * x, m * x * y, m * y * y, v, v * x, v * y])
    none = state.labels == Label.NONE
    band = none & (S[0] >= 3)
    phi = np.where(none, 0.0, u)
    dist = np.full(u.shape, np.inf)
    normal = np.zeros((2,) + u.shape)
    if band.any():
        s = S[:, band]
        M = np.stack(
            [np.stack([s[0], s[1], s[2]], -1), np.stack([s[1], s[3], s[4]], -1), np.stack([s[2], s[4], s[5]], -1)],
            -2,
        )
        rhs = np.stack([s[6], s[7], s[8]], -1)
        det = np.linalg.det(M)
        ok = np.abs(det) > 1e-9 * s[0] ** 3
        coef = np.zeros_like(rhs)
        coef[ok] = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
        a = coef[:, 0]
        slope = np.hypot(coef[:, 1], coef[:, 2])
        d = np.where(ok & (slope > 0), np.abs(a) / np.where(slope > 0, slope, 1.0), np.inf)
        phi[band] = np.where(ok, np.minimum(a, 0.0), 0.0)
        dist[band] = d
        safe = np.where(slope > 0, slope, 1.0)
        normal[0][band] = np.where(ok, coef[:, 1] / safe, 0.0)
        normal[1][band] = np.where(ok, coef[:, 2] / safe, 0.0)
    if len(_LEVEL_CACHE) > 8:
        _LEVEL_CACHE.clear()
    _LEVEL_CACHE[key] = (phi, dist, normal)
    return phi, dist, normal


def free_boundary_points(
    state: State,
    margin: float = 0.0,
    exclude_contact: bool = True,
    max_offset: float | None = None,
    snap: bool = False,
) -> np.ndarray:
    """Centres ``(x, y)`` of unlabeled cells adjacent to a labeled cell.

    Points closer than ``margin`` to the box edge are dropped, as are points
    within two cells of both phases when ``exclude_contact`` is set.  With
    ``max_offset`` (in cells) only centres whose distance to the zero line of
    the local one-sided plane fit is at most that value are kept.  With
    ``snap`` each centre is moved along the plane normal onto that zero line
    (centres without a plane fit are dropped).
    """
    lab = _labeled(state)
    none = state.labels == Label.NONE
    touch = np.zeros_like(lab)
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        touch |= _shift(lab, dj, di, False)
    m = none & touch
    if exclude_contact:
        m &= ~_near_both_phases(state)
    X, Y = state.grid.centers()
    g = state.grid
    x0, y0 = g.origin
    x1, y1 = x0 + g.nx * g.h, y0 + g.ny * g.h
    inside = (X - margin > x0) & (X + margin < x1) & (Y - margin > y0) & (Y + margin < y1)
    m &= inside
    if max_offset is not None or snap:
        _, dist, normal = _level_field(state)
        if max_offset is not None:
            m &= dist <= max_offset
        if snap:
            m &= np.isfinite(dist)
            return _snap(state, X[m], Y[m], normal[0][m], normal[1][m])
    return np.column_stack([X[m], Y[m]])


def _snap(state: State, x, y, nx_, ny_, reach: float = 1.5, iters: int = 50):
    """Move points along ``(nx_, ny_)`` to the zero crossing of the interpolated level field."""
    h = state.grid.h
    phi = _level_field(state)[0]
    g = state.grid

    def f(t):
        ci = (x + t * nx_ - g.origin[0]) / h - 0.5
        cj = (y + t * ny_ - g.origin[1]) / h - 0.5
        return ndimage.map_coordinates(phi, [cj, ci], order=1, mode="constant", cval=0.0)

    lo = np.zeros_like(x)
    hi = np.full_like(x, reach * h)
    ok = f(hi) > 0
    # largest t with phi <= 0 along the ray: bisection on the sign
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = f(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    t = np.where(ok, lo, 0.0)
    return np.column_stack([x + t * nx_, y + t * ny_])


# --------------------------------------------------------------------------
# gradient residuals


def _one_sided(u, ok, dj, di, h):
    """Derivative at each cell along ``+(dj, di)`` using cells on that side.

    Second order ``(-3u0 + 4u1 - u2) / 2h`` when two cells are available,
    first order otherwise; NaN when none is.
    """
    u1 = _shift(u, dj, di, np.nan)
    u2 = _shift(u, 2 * dj, 2 * di, np.nan)
    ok1 = _shift(ok, dj, di, False)
    ok2 = _shift(ok, 2 * dj, 2 * di, False)
    d2 = (-3.0 * u + 4.0 * u1 - u2) / (2.0 * h)
    d1 = (u1 - u) / h
    return np.where(ok1 & ok2, d2, np.where(ok1, d1, np.nan))


def _axis_derivative(u, ok, ax, h):
    dj, di = (0, 1) if ax == 1 else (1, 0)
    fwd = _one_sided(u, ok, dj, di, h)
    bwd = -_one_sided(u, ok, -dj, -di, h)
    okp = _shift(ok, dj, di, False)
    okm = _shift(ok, -dj, -di, False)
    central = (_shift(u, dj, di, 0.0) - _shift(u, -dj, -di, 0.0)) / (2.0 * h)
    out = np.where(okp & okm, central, np.where(okp, fwd, np.where(okm, bwd, 0.0)))
    return out


def free_boundary_residual(state: State, lam: float) -> np.ndarray:
    """``| |grad u| - sqrt(Lambda) |`` on labeled cells next to an unlabeled cell."""
    u = state.u
    h = state.grid.h
    lab = _labeled(state)
    none = state.labels == Label.NONE
    touch = np.zeros_like(lab)
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        touch |= _shift(none, dj, di, False)
    cells = _free(state) & touch & ~_near_both_phases(state)
    g = labeled_gradient(state)
    return np.abs(g[cells] - math.sqrt(lam))


def labeled_gradient(state: State) -> np.ndarray:
    """``|grad u|`` per cell, differencing only toward labeled cells.

    Central differences where both neighbours along an axis are labeled,
    one-sided second-order stencils into the labeled side where only one is.
    """
    lab = _labeled(state)
    h = state.grid.h
    gx = _axis_derivative(state.u, lab, 1, h)
    gy = _axis_derivative(state.u, lab, 0, h)
    return np.hypot(gx, gy)


def _face_normal_derivative(u, ok, j, i, dj, di, h):
    """Derivative of u at a face, along ``(dj, di)`` pointing away from it.

    Quadratic through the cells at h/2, 3h/2 and 5h/2 of one phase, or the
    two-cell difference when the phase is only two cells deep.
    """
    ny, nx = u.shape
    vals = [u[j, i]]
    for k in (1, 2):
        jj, ii = j + k * dj, i + k * di
        if 0 <= jj < ny and 0 <= ii < nx and ok[jj, ii]:
            vals.append(u[jj, ii])
        else:
            break
    if len(vals) == 3:
        return (-2.0 * vals[0] + 3.0 * vals[1] - vals[2]) / h
    if len(vals) == 2:
        return (vals[1] - vals[0]) / h
    return float("nan")


def robin_residual(state: State, beta: float, tangential: bool = False) -> np.ndarray:
    """``| |d_n u1| + |d_n u2| - beta * ubar |`` on each interface face.

    Normal derivatives are extrapolated to the face from each side.
    ``tangential=True`` uses full gradient magnitudes instead, adding the
    central tangential difference on each side; near contact points the
    tangential part is of order ``sqrt(Lambda)`` and dominates.
    """
    p = phase_of(state.labels)
    u = state.u
    h = state.grid.h
    ny, nx = u.shape
    periodic = state.grid.periodic_y
    out = []
    for ax in (1, 0):
        if ax == 1:
            A = p[:, :-1]
            B = p[:, 1:]
            js, is_ = np.nonzero((A * B) == 2)
            pairs = [((j, i), (j, i + 1), (0, 1)) for j, i in zip(js, is_)]
        else:
            A = p[:-1, :]
            B = p[1:, :]
            js, is_ = np.nonzero((A * B) == 2)
            pairs = [((j, i), (j + 1, i), (1, 0)) for j, i in zip(js, is_)]
        for a, b, (dj, di) in pairs:
            ubar = 0.5 * (u[a] + u[b])
            ok_a = p == p[a]
            ok_b = p == p[b]
            ga = _face_normal_derivative(u, ok_a, a[0], a[1], -dj, -di, h)
            gb = _face_normal_derivative(u, ok_b, b[0], b[1], dj, di, h)
            if tangential:
                tj, ti = di, dj
                ta = tb = 0.0
                for c, ok, store in ((a, ok_a, "a"), (b, ok_b, "b")):
                    jp, ip = c[0] + tj, c[1] + ti
                    jm, im = c[0] - tj, c[1] - ti
                    if periodic:
                        jp %= ny
                        jm %= ny
                    if 0 <= jp < ny and 0 <= ip < nx and 0 <= jm < ny and 0 <= im < nx and ok[jp, ip] and ok[jm, im]:
                        t = (u[jp, ip] - u[jm, im]) / (2 * h)
                        if store == "a":
                            ta = t
                        else:
                            tb = t
                ga = math.hypot(ga, ta)
                gb = math.hypot(gb, tb)
            out.append(abs(abs(ga) + abs(gb) - beta * ubar))
    return np.asarray(out)


def interface_traces(state: State) -> np.ndarray:
    a_idx = []
    p = phase_of(state.labels)
    u = state.u
    m = (p[:, :-1] * p[:, 1:]) == 2
    a_idx.append(0.5 * (u[:, :-1] + u[:, 1:])[m])
    m = (p[:-1, :] * p[1:, :]) == 2
    a_idx.append(0.5 * (u[:-1, :] + u[1:, :])[m])
    return np.concatenate(a_idx)


# --------------------------------------------------------------------------
# ball-based diagnostics


def _check_ball(state: State, x0, r):
    g = state.grid
    xmin, ymin = g.origin
    xmax, ymax = xmin + g.nx * g.h, ymin + g.ny * g.h
    if x0[0] - r < xmin or x0[0] + r > xmax or x0[1] - r < ymin or x0[1] + r > ymax:
        raise ValueError(f"ball B_{r:g}({x0[0]:g}, {x0[1]:g}) leaves the box")


def _sample(state: State, x, y):
    """Bilinear interpolation of the level field, clipped at 0 (zero outside the box)."""
    g = state.grid
    ci = (np.asarray(x) - g.origin[0]) / g.h - 0.5
    cj = (np.asarray(y) - g.origin[1]) / g.h - 0.5
    phi = _level_field(state)[0]
    return np.maximum(ndimage.map_coordinates(phi, [cj, ci], order=1, mode="constant", cval=0.0), 0.0)


def _rescaled(state: State, x0, r, xs, ys):
    return _sample(state, x0[0] + r * xs, x0[1] + r * ys) / r


_N_REF = 128
_N_CIRCLE = 256


def _ref_grid():
    t = -1.0 + (np.arange(_N_REF) + 0.5) * (2.0 / _N_REF)
    X, Y = np.meshgrid(t, t)
    inside = X**2 + Y**2 <= 1.0
    return X, Y, inside


def weiss_energy(state: State, x0, r: float, lam: float) -> float:
    """Boundary-adjusted energy of ``u_r(x) = u(x0 + r x) / r`` on the unit ball."""
    _check_ball(state, x0, r)
    d = 2.0 / _N_REF
    tv = -1.0 + np.arange(_N_REF + 1) * d
    VX, VY = np.meshgrid(tv, tv)
    V = _rescaled(state, x0, r, VX, VY)
    gx = 0.5 * ((V[:-1, 1:] - V[:-1, :-1]) + (V[1:, 1:] - V[1:, :-1])) / d
    gy = 0.5 * ((V[1:, :-1] - V[:-1, :-1]) + (V[1:, 1:] - V[:-1, 1:])) / d
    X, Y, inside = _ref_grid()
    # cell weight normalized so the unit disc has area exactly pi
    wgt = math.pi / np.count_nonzero(inside)
    dirichlet = float(np.sum((gx**2 + gy**2)[inside]) * wgt)
    C = _rescaled(state, x0, r, X, Y)
    volume = lam * float(np.count_nonzero((C > 0) & inside)) * wgt
    ang = 2.0 * math.pi * np.arange(_N_CIRCLE) / _N_CIRCLE
    B = _rescaled(state, x0, r, np.cos(ang), np.sin(ang))
    boundary = float(np.sum(B**2)) * 2.0 * math.pi / _N_CIRCLE
    return dirichlet + volume - boundary


def weiss_decay_fit(state: State, x0, r_ladder, lam: float):
    """Fit ``W(u_r) - Theta ~ C0 r**gamma`` over ``r_ladder``.

    Returns ``(C0, gamma, max_violation, values)``.  ``gamma`` is the slope
    of a log-log least-squares fit over the radii with positive excess
    (radii at or below ``Theta`` satisfy the bound for any ``C0 >= 0``);
    ``C0`` is then the smallest constant with ``W - Theta <= C0 r**gamma`` on
    the ladder, and ``max_violation`` the largest remaining excess over that
    envelope (zero up to rounding).  With no positive excess the fit is
    reported as flat (``gamma = inf``, ``C0 = 0``); with a single one, as
    linear decay through it.
    """
    r = np.asarray(list(r_ladder), dtype=float)
    if r.size < 3:
        raise ValueError("need at least 3 radii")
    th = theta(lam)
    W = np.array([weiss_energy(state, x0, ri, lam) for ri in r])
    exc = W - th
    pos = exc > 1e-12 * th
    if not pos.any():
        return 0.0, math.inf, float(max(exc.max(), 0.0)), W
    if pos.sum() == 1:
        gamma = 1.0
        c0 = float(exc[pos][0] / r[pos][0])
    else:
        gamma = float(np.polyfit(np.log(r[pos]), np.log(exc[pos]), 1)[0])
        c0 = float(np.max(exc[pos] / r[pos] ** gamma))
    viol = float(np.max(exc - c0 * r**gamma))
    return c0, gamma, viol, W


def blow_up_error(state: State, x0, r: float, lam: float):
    """Best half-plane ``sqrt(Lambda) (x . nu)_+`` for ``u_r``; returns ``(nu, sup error)``."""
    _check_ball(state, x0, r)
    X, Y, inside = _ref_grid()
    xs, ys = X[inside], Y[inside]
    v = _rescaled(state, x0, r, xs, ys)
    s = math.sqrt(lam)

    def cost(t):
        return float(np.sum((v - s * np.maximum(xs * math.cos(t) + ys * math.sin(t), 0.0)) ** 2))

    angles = 2.0 * math.pi * np.arange(720) / 720
    k = int(np.argmin([cost(t) for t in angles]))
    step = 2.0 * math.pi / 720
    res = minimize_scalar(cost, bounds=(angles[k] - step, angles[k] + step), method="bounded", options={"xatol": 1e-10})
    t = float(res.x)
    nu = np.array([math.cos(t), math.sin(t)])
    err = float(np.max(np.abs(v - s * np.maximum(xs * nu[0] + ys * nu[1], 0.0))))
    return nu, err


def _ball_mask(state: State, x0, r):
    X, Y = state.grid.centers()
    return (X - x0[0]) ** 2 + (Y - x0[1]) ** 2 <= r * r


def density_and_growth(state: State, lam: float, points=None, radii=None, u_floor: float = 1e-10):
    """Zero-set fraction and ``sup u / r`` in balls around free-boundary points.

    Returns ``(density, growth, summary)``; ``density`` and ``growth`` are
    lists of ``(x, y, r, value)`` and ``summary`` holds the smallest density
    quotient ``c``, the Lipschitz constant ``C`` (largest ``sup u / r``) and
    the non-degeneracy constant ``eta`` (smallest ``sup u / r``).
    """
    h = state.grid.h
    if radii is None:
        radii = [4 * h, 8 * h, 16 * h, 32 * h]
    if points is None:
        points = free_boundary_points(state, margin=max(radii))
    dens, grow = [], []
    zero = state.u <= u_floor
    for x0 in points:
        for r in radii:
            m = _ball_mask(state, x0, r)
            n = np.count_nonzero(m)
            if n == 0:
                continue
            dens.append((x0[0], x0[1], r, np.count_nonzero(zero & m) / n))
            grow.append((x0[0], x0[1], r, float(state.u[m].max()) / r))
    dv = np.array([d[3] for d in dens]) if dens else np.array([np.nan])
    gv = np.array([g[3] for g in grow]) if grow else np.array([np.nan])
    summary = {"c": float(np.min(dv)), "C": float(np.max(gv)), "eta": float(np.min(gv))}
    return dens, grow, summary


def holder_seminorm(state: State, delta: float, exponent: float = 1.0 / 3.0, n_pairs: int = 100_000, seed: int = 0, min_sep_cells: float = 4.0):
    """Largest ``|u(a) - u(b)| / |a - b|**exponent`` over random close pairs in D_delta.

    Pairs are at most ``max(delta**2 / 256, min_sep_cells * h)`` apart; the
    grid floor keeps the separation cap above one cell.
    """
    if not 0 < exponent <= 1:
        raise ValueError("exponent must lie in (0, 1]")
    g = state.grid
    h = g.h
    lab = state.labels
    fixed = (lab == Label.E1) | (lab == Label.E2)
    dist = ndimage.distance_transform_edt(~fixed, sampling=h)
    ok = dist > delta
    js, is_ = np.nonzero(ok)
    if js.size == 0:
        raise ValueError("D_delta is empty")
    cap = max(delta * delta / 256.0, min_sep_cells * h)
    k = max(int(cap / h), 1)
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, js.size, size=n_pairs)
    dj = rng.integers(-k, k + 1, size=n_pairs)
    di = rng.integers(-k, k + 1, size=n_pairs)
    ja, ia = js[pick], is_[pick]
    jb, ib = ja + dj, ia + di
    sep = h * np.hypot(dj, di)
    valid = (sep > 0) & (sep <= cap) & (jb >= 0) & (jb < g.ny) & (ib >= 0) & (ib < g.nx)
    ja, ia, jb, ib, sep = ja[valid], ia[valid], jb[valid], ib[valid], sep[valid]
    valid = ok[jb, ib]
    if not valid.any():
        return 0.0
    q = np.abs(state.u[ja, ia] - state.u[jb, ib])[valid] / sep[valid] ** exponent
    return float(q.max())


def non_collapsing_check(state: State, delta: float) -> float:
    """Minimum of u over non-fixed cells within ``delta`` of a fixed cell."""
    lab = state.labels
    fixed = (lab == Label.E1) | (lab == Label.E2)
    dist = ndimage.distance_transform_edt(~fixed, sampling=state.grid.h)
    m = ~fixed & (dist <= delta)
    if not m.any():
        return float("nan")
    return float(state.u[m].min())


# --------------------------------------------------------------------------
# conformal flattening


@dataclass
class FlattenResult:
    h: np.ndarray
    w: np.ndarray
    mapped_polyline: np.ndarray
    identity_residual: float
    loop_residual: float
    harmonic_defect: float
    loop_excess: float
    edge_residual: float
    original_length: float
    mapped_length: float


def _harmonic_in(u, region, fixed_values):
    """5-point harmonic function on ``region`` with Dirichlet data elsewhere."""
    ny, nx = u.shape
    idx = -np.ones(u.shape, dtype=np.int64)
    n = int(np.count_nonzero(region))
    idx[region] = np.arange(n)
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    js, is_ = np.nonzero(region)
    k = idx[js, is_]
    rows.append(k)
    cols.append(k)
    vals.append(np.full(n, 4.0))
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        jn, in_ = js + dj, is_ + di
        inb = (jn >= 0) & (jn < ny) & (in_ >= 0) & (in_ < nx)
        jn_c, in_c = np.clip(jn, 0, ny - 1), np.clip(in_, 0, nx - 1)
        nb_free = inb & region[jn_c, in_c]
        rows.append(k[nb_free])
        cols.append(idx[jn_c, in_c][nb_free])
        vals.append(-np.ones(np.count_nonzero(nb_free)))
        ext = inb & ~region[jn_c, in_c]
        np.add.at(rhs, k[ext], fixed_values[jn_c, in_c][ext])
    K = csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    out = fixed_values.copy()
    out[region] = spsolve(K, rhs)
    return out


def conformal_flatten(state: State, center, radius: float, lam: float | None = None):
    """Harmonic replacement ``h`` and its conjugate ``w`` in a ball; weighted-length identity.

    ``h`` is discretely harmonic on labeled cells of the ball, equals ``u``
    outside the ball and vanishes on unlabeled cells.  ``w`` lives on cell
    vertices and is integrated from the vertex nearest ``center`` across
    faces of the positivity set; the jump across a face is the normal
    difference of ``h`` (rotated), so the sum of jumps around a cell equals
    that cell's 5-point Laplacian defect.  The identity compares
    ``sum u**2 |d gamma|`` along the Omega1|Omega2 interface inside the ball
    with ``sum h**2 phi |d Phi|`` along its image, ``phi = 1 / (|grad h| a**2)``
    and ``a = h / u``, both by the trapezoid rule on vertex values.
    """
    g = state.grid
    hh = g.h
    u = state.u
    lab = _labeled(state)
    ball = _ball_mask(state, center, radius)
    region = ball & lab & (state.labels != Label.E1) & (state.labels != Label.E2)
    comp, ncomp = ndimage.label(region)
    if ncomp != 1:
        raise TopologyError(f"positivity set in the ball has {ncomp} components")
    holes, nholes = ndimage.label(ball & ~region)
    for k in range(1, nholes + 1):
        if not (ndimage.binary_dilation(holes == k) & ~ball).any():
            raise TopologyError("positivity set in the ball is not simply connected")
    if not (ball & ~lab).any():
        raise TopologyError("free boundary does not meet the ball")

    fixed_vals = np.where(lab, u, 0.0)
    H = _harmonic_in(u, region, fixed_vals)

    # discrete 1-form on dual edges, w on vertices (ny+1, nx+1)
    ny, nx = u.shape
    pos = lab
    # vertical dual edge (vertex (j, i+1) -> (j+1, i+1)) crosses face (j,i)|(j,i+1)
    jump_v = H[:, 1:] - H[:, :-1]
    ok_v = region[:, 1:] & region[:, :-1]
    # horizontal dual edge (vertex (j+1, i) -> (j+1, i+1)) crosses face (j,i)|(j+1,i)
    jump_h = -(H[1:, :] - H[:-1, :])
    ok_h = region[1:, :] & region[:-1, :]

    w = np.full((ny + 1, nx + 1), np.nan)
    ci = int(round((center[0] - g.origin[0]) / hh))
    cj = int(round((center[1] - g.origin[1]) / hh))
    w[cj, ci] = 0.0
    stack = [(cj, ci)]
    while stack:
        vj, vi = stack.pop()
        nbrs = []
        if vj + 1 <= ny and 1 <= vi <= nx - 1 and vj <= ny - 1 and ok_v[vj, vi - 1]:
            nbrs.append((vj + 1, vi, jump_v[vj, vi - 1]))
        if vj - 1 >= 0 and 1 <= vi <= nx - 1 and ok_v[vj - 1, vi - 1]:
            nbrs.append((vj - 1, vi, -jump_v[vj - 1, vi - 1]))
        if vi + 1 <= nx and 1 <= vj <= ny - 1 and vi <= nx - 1 and ok_h[vj - 1, vi]:
            nbrs.append((vj, vi + 1, jump_h[vj - 1, vi]))
        if vi - 1 >= 0 and 1 <= vj <= ny - 1 and ok_h[vj - 1, vi - 1]:
            nbrs.append((vj, vi - 1, -jump_h[vj - 1, vi - 1]))
        for nj, ni, dw in nbrs:
            if np.isnan(w[nj, ni]):
                w[nj, ni] = w[vj, vi] + dw
                stack.append((nj, ni))

    # plaquette sums of the 1-form around interior region cells
    inner = np.zeros(u.shape, dtype=bool)
    inner[1:-1, 1:-1] = region[1:-1, 1:-1]
    loops = np.zeros(u.shape)
    defect = np.zeros(u.shape)
    loops[1:-1, 1:-1] = np.abs(
        jump_h[:-1, 1:-1] + jump_v[1:-1, 1:] - jump_h[1:, 1:-1] - jump_v[1:-1, :-1]
    )
    defect[1:-1, 1:-1] = np.abs(
        H[1:-1, 2:] + H[1:-1, :-2] + H[2:, 1:-1] + H[:-2, 1:-1] - 4.0 * H[1:-1, 1:-1]
    )
    loops = np.where(inner, loops, 0.0)
    defect = np.where(inner, defect, 0.0)
    loop_res = float(loops.max())
    harm = float(defect.max())
    excess = float(np.max(loops - 10.0 * defect))
    # path independence: w differences against the 1-form on every usable edge
    ev = ok_v & ~np.isnan(w[:-1, 1:-1]) & ~np.isnan(w[1:, 1:-1])
    dv = np.abs(w[1:, 1:-1] - w[:-1, 1:-1] - jump_v)
    eh = ok_h & ~np.isnan(w[1:-1, :-1]) & ~np.isnan(w[1:-1, 1:])
    dh = np.abs(w[1:-1, 1:] - w[1:-1, :-1] - jump_h)
    edge_res = float(max(dv[ev].max(initial=0.0), dh[eh].max(initial=0.0)))

    # interface polyline: vertices shared by Omega1|Omega2 faces inside the ball
    p = phase_of(state.labels)
    segs = []
    m = (p[:, :-1] * p[:, 1:]) == 2
    for j, i in zip(*np.nonzero(m)):
        segs.append(((j, i + 1), (j + 1, i + 1)))
    m = (p[:-1, :] * p[1:, :]) == 2
    for j, i in zip(*np.nonzero(m)):
        segs.append(((j + 1, i), (j + 1, i + 1)))

    def vertex_ok(vj, vi):
        if not (1 <= vj <= ny - 1 and 1 <= vi <= nx - 1):
            return False
        cells = region[vj - 1 : vj + 1, vi - 1 : vi + 1]
        return bool(cells.all() and not np.isnan(w[vj, vi]))

    def vertex_vals(vj, vi):
        uc = u[vj - 1 : vj + 1, vi - 1 : vi + 1]
        Hc = H[vj - 1 : vj + 1, vi - 1 : vi + 1]
        uv = float(uc.mean())
        hv = float(Hc.mean())
        hx = 0.5 * ((Hc[0, 1] - Hc[0, 0]) + (Hc[1, 1] - Hc[1, 0])) / hh
        hy = 0.5 * ((Hc[1, 0] - Hc[0, 0]) + (Hc[1, 1] - Hc[0, 1])) / hh
        return uv, hv, math.hypot(hx, hy)

    orig = 0.0
    mapped = 0.0
    poly = []
    degenerate = False
    for v0, v1 in segs:
        if not (vertex_ok(*v0) and vertex_ok(*v1)):
            continue
        u0, h0, g0 = vertex_vals(*v0)
        u1, h1, g1 = vertex_vals(*v1)
        if min(g0, g1) < 1e-10 or min(u0, u1) <= 0:
            degenerate = True
            continue
        dgamma = hh
        dphi = math.hypot(w[v1] - w[v0], h1 - h0)
        orig += 0.5 * (u0**2 + u1**2) * dgamma
        f0 = h0**2 / (g0 * (h0 / u0) ** 2)
        f1 = h1**2 / (g1 * (h1 / u1) ** 2)
        mapped += 0.5 * (f0 + f1) * dphi
        poly.append(((w[v0], h0), (w[v1], h1)))
    if degenerate:
        warnings.warn("|grad h| or u vanishes on the interface polyline", RuntimeWarning)
    resid = abs(mapped - orig) / orig if orig > 0 else float("nan")
    return FlattenResult(
        h=H,
        w=w,
        mapped_polyline=np.asarray(poly, dtype=float).reshape(-1, 2, 2),
        identity_residual=resid,
        loop_residual=loop_res,
        harmonic_defect=harm,
        loop_excess=excess,
        edge_residual=edge_res,
        original_length=orig,
        mapped_length=mapped,
    )


# --------------------------------------------------------------------------
# contact angles


def _contour_points(mask: np.ndarray):
    f = np.pad(mask.astype(float), 1)
    return [c - 1.0 for c in find_contours(f, 0.5)]


def _classify(contour, p):
    """Per contour vertex: True when it sits between a phase-1 and a phase-2 cell."""
    ny, nx = p.shape
    out = np.zeros(len(contour), dtype=bool)
    for k, (r, c) in enumerate(contour):
        r0, c0 = int(math.floor(r)), int(math.floor(c))
        if abs(r - round(r)) < 1e-9:
            a = (int(round(r)), c0)
            b = (int(round(r)), c0 + 1)
        else:
            a = (r0, int(round(c)))
            b = (r0 + 1, int(round(c)))
        va = p[a] if 0 <= a[0] < ny and 0 <= a[1] < nx else 0
        vb = p[b] if 0 <= b[0] < ny and 0 <= b[1] < nx else 0
        out[k] = {int(va), int(vb)} == {1, 2}
    return out


def _fit_direction(pts):
    pts = np.asarray(pts, dtype=float)
    c = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(c, full_matrices=False)
    return vt[0]


def contact_angle(state: State, n_fit: int = 6):
    """Angles (degrees, in [0, 90]) where the Omega1|Omega2 interface meets the free boundary."""
    p = phase_of(state.labels)
    periodic = state.grid.periodic_y
    ny = p.shape[0]
    pos = p > 0
    pos_contours = _contour_points(pos)
    pos_pts = np.concatenate(pos_contours) if pos_contours else np.zeros((0, 2))
    angles = []
    for c in _contour_points(p == 1):
        if len(c) < 2:
            continue
        closed = np.allclose(c[0], c[-1])
        pts = c[:-1] if closed else c
        cls = _classify(pts, p)
        n = len(pts)
        if cls.all() or not cls.any():
            continue
        for k in range(n):
            k1 = (k + 1) % n
            if not closed and k1 == 0:
                break
            if cls[k] == cls[k1]:
                continue
            # walk into the interface run from the transition
            step = 1 if cls[k1] else -1
            start = k1 if cls[k1] else k
            run = []
            t = start
            while len(run) < n_fit and cls[t]:
                run.append(pts[t])
                t = (t + step) % n
                if not closed and (t == 0 or t == n - 1):
                    break
            if len(run) < 2:
                continue
            contact = 0.5 * (pts[k] + pts[k1])
            if periodic and not 0 <= contact[0] <= ny - 1:
                continue  # wrap-around edge, not a free boundary
            d = np.hypot(*(pos_pts - contact).T)
            near = pos_pts[np.argsort(d, kind="stable")[:n_fit]]
            ti = _fit_direction(run)
            tf = _fit_direction(near)
            cosang = abs(float(np.dot(ti, tf)))
            angles.append(math.degrees(math.acos(min(cosang, 1.0))))
    return angles


# --------------------------------------------------------------------------
# interface minimality


def _crop(state: State, j0, j1, i0, i1) -> State:
    g = state.grid
    sub = Grid(nx=i1 - i0, ny=j1 - j0, h=g.h, origin=(g.origin[0] + i0 * g.h, g.origin[1] + j0 * g.h))
    return State(sub, state.u[j0:j1, i0:i1].copy(), state.labels[j0:j1, i0:i1].copy(), state.g_value)


def _local_part(sub: State, beta: float, eps: float) -> float:
    p1, p2 = phase_perimeters(sub)
    return beta * interface_integral(sub) + eps * (p1 + p2)


def interface_local_minimality_check(state: State, beta: float, eps: float = 0.0, window: int = 8, n_windows: int = 100, seed: int = 0):
    """Most negative change of ``beta * interface + eps * perimeters`` over phase swaps.

    Windows of ``window x window`` cells are centred at random interface
    cells; inside each, every single cell and every 2x2 block of OMEGA
    cells is relabeled in all phase patterns with u fixed.  Changes are
    computed by re-evaluating the energy terms on the window plus a one-cell
    collar.  Returns ``0.0`` when there is no interface.
    """
    p = phase_of(state.labels)
    ny, nx = p.shape
    iface = np.zeros(p.shape, dtype=bool)
    m = (p[:, :-1] * p[:, 1:]) == 2
    iface[:, :-1] |= m
    iface[:, 1:] |= m
    m = (p[:-1, :] * p[1:, :]) == 2
    iface[:-1, :] |= m
    iface[1:, :] |= m
    js, is_ = np.nonzero(iface)
    if js.size == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, js.size, size=n_windows)
    worst = math.inf
    for k in picks:
        j0 = int(np.clip(js[k] - window // 2, 1, ny - window - 1))
        i0 = int(np.clip(is_[k] - window // 2, 1, nx - window - 1))
        sub = _crop(state, j0 - 1, j0 + window + 1, i0 - 1, i0 + window + 1)
        base = _local_part(sub, beta, eps)
        lab = sub.labels
        free = (lab == Label.OMEGA1) | (lab == Label.OMEGA2)
        other = np.where(lab == Label.OMEGA1, Label.OMEGA2, Label.OMEGA1).astype(np.int8)
        for jj in range(1, window + 1):
            for ii in range(1, window + 1):
                if not free[jj, ii]:
                    continue
                trial = lab.copy()
                trial[jj, ii] = other[jj, ii]
                d = _local_part(sub.replace(labels=trial), beta, eps) - base
                worst = min(worst, d)
        for jj in range(1, window):
            for ii in range(1, window):
                if not free[jj : jj + 2, ii : ii + 2].all():
                    continue
                for bits in range(16):
                    trial = lab.copy()
                    blk = np.array([[bits & 1, bits & 2], [bits & 4, bits & 8]], dtype=bool)
                    trial[jj : jj + 2, ii : ii + 2] = np.where(blk, Label.OMEGA2, Label.OMEGA1)
                    if np.array_equal(trial, lab):
                        continue
                    d = _local_part(sub.replace(labels=trial), beta, eps) - base
                    worst = min(worst, d)
    return float(worst if math.isfinite(worst) else 0.0)


# --------------------------------------------------------------------------
# report


@dataclass
class DiagnosticsReport:
    fb_residuals: list = field(default_factory=list)
    robin_residuals: list = field(default_factory=list)
    weiss: list = field(default_factory=list)
    weiss_fit: dict = field(default_factory=dict)
    blowup_errors: list = field(default_factory=list)
    density_quotients: list = field(default_factory=list)
    growth: list = field(default_factory=list)
    growth_summary: dict = field(default_factory=dict)
    holder_seminorm: float | None = None
    noncollapse_min: float | None = None
    contact_angles: list = field(default_factory=list)
    flatten_residual: float | None = None
    interface_minimality: float | None = None

    def to_dict(self):
        def clean(v):
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple, np.ndarray)):
                return [clean(x) for x in v]
            if isinstance(v, (np.floating, float)):
                return float(v) if math.isfinite(v) else None
            if isinstance(v, np.integer):
                return int(v)
            return v

        return clean(self.__dict__)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def csv_tables(self):
        return {
            "fb_residuals": (["residual"], [[x] for x in self.fb_residuals]),
            "robin_residuals": (["residual"], [[x] for x in self.robin_residuals]),
            "weiss": (["x", "y", "r", "W"], self.weiss),
            "blowup_errors": (["x", "y", "r", "nu_x", "nu_y", "error"], self.blowup_errors),
            "density_quotients": (["x", "y", "r", "density"], self.density_quotients),
            "growth": (["x", "y", "r", "sup_u_over_r"], self.growth),
            "contact_angles": (["angle_deg"], [[x] for x in self.contact_angles]),
        }

    def write_csvs(self, out_dir):
        import os

        for name, (header, rows) in self.csv_tables().items():
            with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(header)
                for row in rows:
                    wr.writerow([format(float(v), ".17g") for v in row])
