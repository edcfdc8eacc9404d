"""Forward solves on a small star: wave energy, node balance, heat and Schrödinger.

Run: python demos/01_forward.py
"""
import numpy as np

from treewave import discretize, extract_trace, solve_heat, solve_schrodinger, solve_wave, star_tree
from treewave.diagnostics import energy_series, max_kirchhoff_residual
from treewave.traces import DIRICHLET, NEUMANN, norm_L2_space
from treewave.fields import NetworkField

g = star_tree((1.0, 0.8, 1.2))
L = {e.id: e.length for e in g.edges}
p = lambda e, s: 1 + 0.5 * np.cos(s)
grid = discretize(g, 0.01, 0.8, 3.0)
print(grid)

# edges run from the center (s = 0) to the leaves; quarter-cosine is 1 at P and 0 at every Q
u0 = lambda e, s: np.cos(np.pi * s / (2 * L[e]))
sol = solve_wave(grid, None, u0, None, None)
E = energy_series(sol)
print(f"wave, p = 0: energy {E[0]:.6f} -> {E[-1]:.6f} (drift {abs(E[-1] / E[0] - 1):.2e})")
print(f"max Kirchhoff residual (solver steps incl. t=0) {max_kirchhoff_residual(sol):.2e}")
flux = extract_trace(sol, "Q1", NEUMANN)
print(f"outward flux at Q1, t = 0: {flux.values[0]:.4f} (exact {-np.pi / (2 * L['e1']):.4f})")

# heat with zero Neumann data relaxes to the mean
hsol = solve_heat(grid, None, u0)
print(f"heat: Q1 value {extract_trace(hsol, 'Q1', DIRICHLET).values[-1]:.4f} at T = {grid.T}")

# Crank-Nicolson keeps the L2 norm
ssol = solve_schrodinger(grid, p, u0, None)
n = [norm_L2_space(NetworkField.from_flat(grid, ssol.values[k])) for k in (0, grid.nt)]
print(f"schrodinger: |u(0)| = {n[0]:.12f}, |u(T)| = {n[1]:.12f}")
