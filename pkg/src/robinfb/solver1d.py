"""The one-dimensional interface-formation example, in closed form and numerically.

The interval is ``[-1-eps, 1+eps]`` with ``u = 1`` at both ends and ``Lambda = 1``.
Two configurations compete: two disjoint one-phase wedges, and a single
bridged support with an interface at ``x = 0`` carrying the trace ``ell``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

__all__ = [
    "Config1D",
    "disjoint_energy",
    "bridged_energy",
    "bridged_energy_opt",
    "optimal_ell",
    "interface_threshold",
    "threshold_closed_form",
    "solve_1d_numeric",
    "golden_section",
    "sweep_rows",
    "SWEEP_COLUMNS",
]

SWEEP_COLUMNS = [
    "beta",
    "eps",
    "energy_disjoint",
    "energy_bridged_opt",
    "ell_opt",
    "winner",
    "eps0_for_beta",
]


@dataclass(frozen=True)
class Config1D:
    eps: float
    beta: float
    ell: float

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if not 0.0 <= self.ell <= 1.0:
            raise ValueError("ell must lie in [0, 1]")

    @property
    def domain(self):
        return (-1.0 - self.eps, 1.0 + self.eps)

    def energy(self):
        return bridged_energy(self.beta, self.eps, self.ell)


def disjoint_energy() -> float:
    """Energy of the two wedges ``(-x-eps)_+`` and ``(x-eps)_+``: 2 + 2."""
    return 4.0


def bridged_energy(beta: float, eps: float, ell: float) -> float:
    # integer literals keep the expression exact for Fraction arguments
    return 2 * (1 - ell) ** 2 / (1 + eps) + beta * ell**2 + 2 + 2 * eps


def optimal_ell(beta: float, eps: float) -> float:
    return 2.0 / (2.0 + beta + eps * beta)


def bridged_energy_opt(beta: float, eps: float) -> float:
    return bridged_energy(beta, eps, optimal_ell(beta, eps))


def golden_section(f, a: float, b: float, tol: float = 1e-12, maxiter: int = 200):
    """Minimize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def interface_threshold(beta: float, tol: float = 1e-12) -> float:
    """Half-gap ``eps0`` at which the optimal bridged energy reaches 4."""
    if not beta > 0:
        raise ValueError("beta must be > 0")

    def gap(e):
        return bridged_energy_opt(beta, e) - disjoint_energy()

    lo, hi = 0.0, 1.0
    if gap(lo) >= 0:
        raise RuntimeError("bridged configuration does not beat the disjoint one at eps=0")
    while gap(hi) < 0:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def threshold_closed_form(beta: float) -> float:
    """Positive root of ``beta*e**2 + 2*e - 2 = 0``."""
    return (math.sqrt(1.0 + 2.0 * beta) - 1.0) / beta


def _dirichlet_linear_solve(n: int, length: float, left: float, right: float) -> float:
    """Discrete Dirichlet energy of the minimizer on ``n`` cells with end values.

    Solves the tridiagonal system for the interior nodes rather than using
    the linear profile, so this path is independent of the closed forms.
    """
    hh = length / n
    m = n - 1
    if m <= 0:
        return (right - left) ** 2 / hh
    ab = np.zeros((3, m))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    ab[2, :-1] = -1.0
    rhs = np.zeros(m)
    rhs[0] += left
    rhs[-1] += right
    inner = solve_banded((1, 1), ab, rhs)
    nodes = np.concatenate(([left], inner, [right]))
    return float(np.sum(np.diff(nodes) ** 2) / hh)


def solve_1d_numeric(beta: float, eps: float, n: int = 4096):
    """Minimize the discretized 1D functional over both candidate configurations.

    Returns ``(energy, ell_hat, tag)`` where ``tag`` is ``"bridged"`` or
    ``"disjoint"``.  Wedges are searched over their positivity length, the
    bridged candidate over its interface trace; each evaluation solves the
    discrete Dirichlet problem on ``n`` cells.
    """
    if n < 64:
        raise ValueError("n must be >= 64")
    half = 1.0 + eps
    coarse = min(n, 256)

    def wedge(length):
        return _dirichlet_linear_solve(coarse, length, 1.0, 0.0) + length

    # wedge energy is convex in its length; search on (0, half]
    L, e_wedge = golden_section(wedge, 1e-6, half, tol=1e-11)
    e_wedge = _dirichlet_linear_solve(n, L, 1.0, 0.0) + L
    e_disjoint = 2.0 * e_wedge

    def bridged(ell):
        return 2.0 * _dirichlet_linear_solve(coarse, half, 1.0, ell) + beta * ell**2 + 2.0 * half

    ell_hat, _ = golden_section(bridged, 0.0, 1.0, tol=1e-10)
    e_bridged = 2.0 * _dirichlet_linear_solve(n, half, 1.0, ell_hat) + beta * ell_hat**2 + 2.0 * half

    if e_bridged < e_disjoint:
        return e_bridged, ell_hat, "bridged"
    return e_disjoint, 0.0, "disjoint"


def sweep_rows(betas, epss):
    """Rows of the (beta, eps) sweep table, in parameter order."""
    rows = []
    for beta in betas:
        eps0 = interface_threshold(beta)
        for eps in epss:
            eb = bridged_energy_opt(beta, eps)
            ed = disjoint_energy()
            rows.append(
                {
                    "beta": beta,
                    "eps": eps,
                    "energy_disjoint": ed,
                    "energy_bridged_opt": eb,
                    "ell_opt": optimal_ell(beta, eps),
                    "winner": "bridged" if eb < ed else "disjoint",
                    "eps0_for_beta": eps0,
                }
            )
    return rows
