"""Bridge or split: the 1D competition between one shared support and two wedges.

Two unit-value fixed sets sit a distance 2 + 2 eps apart.  Either each grows
its own wedge (energy 4, independent of beta and eps), or the two phases
meet in the middle and pay beta * ell**2 at the interface.  The bridged
energy grows with eps, so there is a threshold eps0(beta) past which the
supports separate.
"""

import numpy as np

from robinfb.solver1d import bridged_energy_opt, disjoint_energy, interface_threshold, optimal_ell, solve_1d_numeric

print("beta    eps0     closed-form check")
for beta in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0):
    e0 = interface_threshold(beta)
    print(f"{beta:5.2f}  {e0:.6f}  J_bridged(eps0) = {bridged_energy_opt(beta, e0):.12f}")

print("\nAt beta = 1 the threshold is sqrt(3) - 1 =", np.sqrt(3) - 1)

beta = 1.0
print("\n eps   ell*    J_bridged  J_disjoint  winner   (grid solve)")
for eps in (0.0, 0.2, 0.5, 0.7, 0.75, 1.0):
    eb = bridged_energy_opt(beta, eps)
    win = "bridged" if eb < disjoint_energy() else "disjoint"
    e_num, ell_num, tag = solve_1d_numeric(beta, eps, 2048)
    print(f"{eps:4.2f}  {optimal_ell(beta, eps):.4f}  {eb:9.5f}  {disjoint_energy():9.5f}   {win:8s} {tag} J={e_num:.5f}")
