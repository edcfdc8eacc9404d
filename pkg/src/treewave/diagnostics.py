"""Energy, node traces and Kirchhoff residuals of computed solutions."""
from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .fields import SolutionField
from .traces import DIRICHLET, NEUMANN, TraceRecord

# one-sided derivative stencils at s = 0, in units of 1/dx
_ONE_SIDED = {
    2: np.array([-3.0, 4.0, -1.0]) / 2.0,
    4: np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
}


def _trapz(vals, h):
    return h * (vals.sum(axis=-1) - 0.5 * (vals[..., 0] + vals[..., -1]))


def energy(sol: SolutionField, k: int) -> float:
    """E(t_k) = ||u_t||^2 + ||u_x||^2 over the network.

    u_t by the centered difference (u^{k+1} - u^{k-1}) / (2 dt), so
    1 <= k <= nt - 1.
    """
    if sol.kind != "wave":
        raise ValidationError("energy is defined for wave solutions")
    if not 1 <= k <= sol.grid.nt - 1:
        raise IndexError(f"energy needs 1 <= k <= {sol.grid.nt - 1}, got {k}")
    grid = sol.grid
    total = 0.0
    for e in grid.tree.edges:
        idx = grid.edge_index[e.id]
        h = grid.dx(e.id)
        ut = (sol.values[k + 1, idx] - sol.values[k - 1, idx]) / (2 * grid.dt)
        ux = np.gradient(sol.values[k, idx], h, edge_order=2)
        total += _trapz(np.abs(ut) ** 2 + np.abs(ux) ** 2, h)
    return float(total)


def energy_series(sol: SolutionField) -> np.ndarray:
    """Energy at every admissible index k = 1..nt-1 (vectorized)."""
    grid = sol.grid
    total = np.zeros(grid.nt - 1)
    for e in grid.tree.edges:
        idx = grid.edge_index[e.id]
        h = grid.dx(e.id)
        ev = sol.values[:, idx]
        ut = (ev[2:] - ev[:-2]) / (2 * grid.dt)
        ux = np.gradient(ev[1:-1], h, axis=1, edge_order=2)
        total += _trapz(np.abs(ut) ** 2 + np.abs(ux) ** 2, h)
    return total


def outward_derivative(edge_vals, h, at_start, order=2):
    """Outward normal derivative at one end of an edge, for every row of ``edge_vals``."""
    c = _ONE_SIDED[order]
    n = c.size
    if edge_vals.shape[-1] < n:
        raise ValidationError(f"edge too coarse for a {order}-order one-sided stencil")
    if at_start:
        # d/ds at s=0; outward normal points towards -s
        return -(edge_vals[..., :n] @ c) / h
    # reversed coordinate r = l - s, so d/ds = -d/dr and the outward normal is +s
    return -(edge_vals[..., ::-1][..., :n] @ c) / h


def extract_trace(sol: SolutionField, node: str, kind: str = DIRICHLET, edge: str | None = None,
                  order: int = 2) -> TraceRecord:
    """Dirichlet value or outward normal derivative of ``sol`` at ``node`` along ``edge``.

    The outward derivative is -u_x at the edge's start node and +u_x at its end node.
    """
    grid = sol.grid
    tree = grid.tree
    if node not in grid.node_pos:
        raise ValidationError(f"unknown node {node!r}")
    if edge is None:
        inc = tree.incident(node)
        if kind == NEUMANN and len(inc) != 1:
            raise ValidationError(f"node {node!r} has {len(inc)} edges; pass edge=")
        edge = inc[0].id
    e = tree.edge(edge)
    if node not in (e.start, e.end):
        raise ValidationError(f"edge {edge!r} is not incident to node {node!r}")
    if kind == DIRICHLET:
        vals = sol.node_values(node).copy()
    elif kind == NEUMANN:
        vals = outward_derivative(sol.edge_values(edge), grid.dx(edge), node == e.start, order)
    else:
        raise ValidationError(f"unknown trace kind {kind!r}")
    return TraceRecord(node, edge, kind, grid.dt, vals)


def kirchhoff_residual(sol: SolutionField, order: int = 2) -> dict:
    """Per internal node, the time series |sum of outward derivatives|.

    ``order=2`` uses the stencil the wave solver's node rule is built from, so
    the residual measures how well the discrete balance is enforced; ``order=4``
    is an independent, more accurate probe of the true flux balance.
    """
    out = {}
    for node in sol.grid.tree.internal_nodes:
        total = 0.0
        for e in sol.grid.tree.incident(node):
            total = total + extract_trace(sol, node, NEUMANN, e.id, order).values
        out[node] = TraceRecord(node, None, "kirchhoff-residual", sol.grid.dt, np.abs(total))
    return out


def max_kirchhoff_residual(sol, order=2):
    res = kirchhoff_residual(sol, order)
    return max((float(r.values.max()) for r in res.values()), default=0.0)
