"""The 1D geometry embedded as a periodic strip and solved in 2D.

Below the threshold (eps = 0.2 < sqrt(3) - 1) the solver should find the
bridged state with interface trace 0.625 and energy 3.025 per unit height.
Above it (eps = 1) the supports should separate with energy 4 per unit
height.
"""

import time

import numpy as np

from robinfb.core import ProblemSpec, Rect, face_pairs, phase_of
from robinfb.diagnostics import interface_traces
from robinfb.energy import total_energy
from robinfb.solver1d import bridged_energy_opt, disjoint_energy, interface_threshold
from robinfb.solver2d import SolverParams, continuation


def strip(eps, cells=496, pad=8, ny=16):
    h = (2 + 2 * eps) / cells
    L, H = (cells + 2 * pad) * h, ny * h
    return ProblemSpec(
        box=(0.0, 0.0, L, H),
        resolution=cells + 2 * pad,
        shapes_E1=(Rect((0.0, 0.0), (pad * h, H)),),
        shapes_E2=(Rect((L - pad * h, 0.0), (pad * h, H)),),
        beta=1.0,
        lam=1.0,
        strip=True,
    )


print(f"threshold eps0(1) = {interface_threshold(1.0):.6f}")
for eps in (0.2, 1.0):
    spec = strip(eps)
    t0 = time.perf_counter()
    state, trace = continuation(spec, SolverParams())
    dt = time.perf_counter() - t0
    e = total_energy(state, spec.beta, spec.lam)
    per_height = e.total_J / (state.grid.ny * state.grid.h)
    p = phase_of(state.labels).ravel()
    a, b, _ = face_pairs(state.grid)
    n_if = int(np.count_nonzero(p[a] * p[b] == 2))
    expected = min(bridged_energy_opt(1.0, eps), disjoint_energy())
    print(f"\neps = {eps}: solved in {dt:.1f}s, {n_if} interface faces")
    print(f"  J per unit height {per_height:.5f}, 1D optimum {expected:.5f}")
    if n_if:
        print(f"  interface trace {interface_traces(state).mean():.5f}")
    for name, eb in trace.basins.items():
        print(f"  basin {name:8s} final J_eps = {eb.total_J_eps:.6f}")
