"""Small constructors shared by the test modules."""

import numpy as np

from robinfb.core import Grid, Label, State


def golden_exact(f, a, b, tol=1e-13):
    """Golden-section search whose comparisons are exact.

    Probe points are rounded to floats and then evaluated in rational
    arithmetic, so the bracket keeps shrinking past the usual sqrt(eps)
    floor of floating-point golden section.
    """
    from fractions import Fraction

    invphi = (5**0.5 - 1) / 2
    a, b = Fraction(a), Fraction(b)
    c = Fraction(float(b - invphi * (b - a)))
    d = Fraction(float(a + invphi * (b - a)))
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = Fraction(float(b - invphi * (b - a)))
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = Fraction(float(a + invphi * (b - a)))
            fd = f(d)
        if not a < c < d < b:
            break
    return float((a + b) / 2)


def strip_grid(nx, ny, h):
    return Grid(nx=nx, ny=ny, h=h, origin=(0.0, 0.0), periodic_y=True)


def box_grid(n, h=None):
    return Grid(nx=n, ny=n, h=1.0 / n if h is None else h, origin=(0.0, 0.0), periodic_y=False)


def strip_1d_state(beta, eps, n_per_unit=64, height_cells=4, bridged=True, pad=4):
    """1D configuration on ``[-1-eps, 1+eps]`` laid out along x, fixed columns outside.

    The bridged profile is the exact piecewise-linear optimum sampled at cell
    centres; the disjoint one is the pair of unit wedges.
    """
    from robinfb.solver1d import optimal_ell

    h = 1.0 / n_per_unit
    half = 1.0 + eps
    n_in = int(round(2 * half / h))
    nx = n_in + 2 * pad
    grid = strip_grid(nx, height_cells, h)
    x = (np.arange(nx) - pad + 0.5) * h - half
    lab = np.full(nx, Label.NONE, dtype=np.int8)
    u = np.zeros(nx)
    lab[x < -half] = Label.E1
    lab[x > half] = Label.E2
    u[(x < -half) | (x > half)] = 1.0
    inside = np.abs(x) < half
    if bridged:
        ell = optimal_ell(beta, eps)
        lab[inside & (x < 0)] = Label.OMEGA1
        lab[inside & (x > 0)] = Label.OMEGA2
        u[inside] = ell + (1.0 - ell) * np.abs(x[inside]) / half
    else:
        w1 = inside & (x < -eps)
        w2 = inside & (x > eps)
        lab[w1] = Label.OMEGA1
        lab[w2] = Label.OMEGA2
        u[w1] = -x[w1] - eps
        u[w2] = x[w2] - eps
    U = np.tile(u, (height_cells, 1))
    L = np.tile(lab, (height_cells, 1))
    return State(grid, U, L, 1.0)


def random_state(rng, n=32, p_label=None):
    """Random labels (no E cells) and a random field supported on labeled cells."""
    grid = box_grid(n)
    p = p_label or [0.4, 0.3, 0.3]
    lab = rng.choice([Label.NONE, Label.OMEGA1, Label.OMEGA2], size=(n, n), p=p).astype(np.int8)
    u = rng.random((n, n)) * (lab != Label.NONE)
    u[0, :] = u[-1, :] = 0.0
    u[:, 0] = u[:, -1] = 0.0
    return State(grid, u, lab, 1.0)
