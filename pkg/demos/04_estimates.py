"""Desk-scale looks at observability, stability and uniqueness.

Run: python demos/04_estimates.py
"""
import numpy as np

from treewave import figure1_tree, run_observability, run_stability, run_uniqueness_check, single_edge
from treewave.experiments import measured_nodes, travel_time

g1 = single_edge(1.0)
obs = run_observability(g1, Ts=(1.5, 2.0, 3.0, 4.0), modes=5)
for k, v in obs.aggregates.items():
    print(f"observability {k}: {v:.4g}")

# a velocity bump far from the measured end is invisible before the wave gets there
bump = lambda e, s: np.where((s > 0.6) & (s < 0.95), np.sin(np.pi * (s - 0.6) / 0.35) ** 4, 0.0)
short = run_observability(g1, velocities=[bump], Ts=(0.5, 3.0))
print("bump ratios at T = 0.5, 3:", [f"{r['ratio']:.3g}" for r in short.records])

st = run_stability(figure1_tree(), n_pairs=10, seed=1, excluded="Q7", split=True)
print({k: round(v, 4) for k, v in st.aggregates.items()})
print("psi/phi split residuals:", [f"{r['split_residual']:.3f}" for r in st.records[:5]])

g = figure1_tree()
L5 = g.edge("e5").length
p = lambda e, s: 1.0 + 0 * s
q = lambda e, s: 1.0 + (0.5 * np.sin(np.pi * s / L5) ** 2 if e == "e5" else 0 * s)
one_way = travel_time(g, "e5", measured_nodes(g, "Q7")[0])
for f in (0.5, 0.9, 1.5, 2.2):
    u = run_uniqueness_check(g, p, q, "Q7", T=f * one_way, equations=("wave",))
    print(f"T = {f:.1f} x one-way time: max wave-trace difference {u.aggregates['max_diff']:.3g}")
