"""Explicit leapfrog solver for the wave equation on a metric tree.

    u_tt - u_xx + p(x) u = g(x, t)    on every edge
    u = h(t)                          at external nodes (or u_x = 0, see below)
    continuity + Kirchhoff            at internal nodes

Interior points use the standard three-point leapfrog update.  After each
step the common value U at a node is the unique solution of the discrete
Kirchhoff balance written with one-sided second-order differences,

    sum_j (3 U - 4 u_1^j + u_2^j) / (2 dx_j) = 0,

which makes continuity exact and the discrete flux balance hold to round-off.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import CFLError, ValidationError
from .fields import NetworkField, NetworkGrid, SolutionField, as_field

COMPAT_TOL = 1e-8


def laplacian_rows(grid: NetworkGrid):
    """Sparse second-difference operator acting on interior points (node rows are empty)."""
    rows, cols, vals = [], [], []
    for e in grid.tree.edges:
        idx = grid.edge_index[e.id]
        inv = 1.0 / grid.dx(e.id) ** 2
        mid = idx[1:-1]
        rows += [mid, mid, mid]
        cols += [idx[:-2], idx[1:-1], idx[2:]]
        vals += [np.full(mid.size, inv), np.full(mid.size, -2 * inv), np.full(mid.size, inv)]
    rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.n_dof, grid.n_dof))


class NodeSolver:
    """Vectorized Kirchhoff node update for a chosen set of nodes."""

    def __init__(self, grid: NetworkGrid, nodes):
        pos, i1, i2, w = [], [], [], []
        self.nodes = list(nodes)
        slot = {n: k for k, n in enumerate(self.nodes)}
        for e in grid.tree.edges:
            idx = grid.edge_index[e.id]
            wt = 1.0 / (2 * grid.dx(e.id))
            if e.start in slot:
                pos.append(slot[e.start]); i1.append(idx[1]); i2.append(idx[2]); w.append(wt)
            if e.end in slot:
                pos.append(slot[e.end]); i1.append(idx[-2]); i2.append(idx[-3]); w.append(wt)
        self.pos = np.array(pos, dtype=np.intp)
        self.i1 = np.array(i1, dtype=np.intp)
        self.i2 = np.array(i2, dtype=np.intp)
        self.w = np.array(w)
        self.dofs = np.array([grid.node_pos[n] for n in self.nodes], dtype=np.intp)
        self.denom = np.bincount(self.pos, weights=3 * self.w, minlength=len(self.nodes))

    def apply(self, u):
        if not self.nodes:
            return
        num = np.bincount(self.pos, weights=self.w * (4 * u[self.i1] - u[self.i2]),
                          minlength=len(self.nodes))
        u[self.dofs] = num / self.denom


def boundary_series(grid: NetworkGrid, h, nodes, dtype=float):
    """Dirichlet data as an array of shape (nt + 1, len(nodes)).

    ``h`` maps node id to a scalar, an array over the time grid, a callable of
    t, or anything with a ``values`` array (e.g. a trace record).  Missing
    nodes get homogeneous data.
    """
    t = grid.times
    out = np.zeros((grid.nt + 1, len(nodes)), dtype=dtype)
    h = h or {}
    unknown = set(h) - set(nodes)
    if unknown:
        raise ValidationError(f"boundary data given for non-boundary nodes {sorted(unknown)}")
    for k, n in enumerate(nodes):
        if n not in h:
            continue
        v = h[n]
        if hasattr(v, "values") and not isinstance(v, dict):
            v = v.values
        if callable(v):
            v = v(t)
        v = np.asarray(v)
        if v.ndim == 0:
            v = np.full(t.shape, v)
        if v.shape != t.shape:
            raise ValidationError(
                f"boundary data at {n!r} has {v.shape[0]} samples, time grid has {t.size}")
        out[:, k] = v
    return out


def _source_fn(grid, g):
    """Normalize the source to a callable k -> flat array (or None)."""
    if g is None:
        return None
    if isinstance(g, np.ndarray):
        if g.shape != (grid.nt + 1, grid.n_dof):
            raise ValidationError(f"source array must have shape {(grid.nt + 1, grid.n_dof)}")
        return lambda k: g[k]
    if callable(g):
        def fn(k):
            val = g(k * grid.dt)
            if isinstance(val, NetworkField):
                return _flat_any(grid, val)
            return np.asarray(val)
        return fn
    raise ValidationError("source must be None, an array or a callable of t")


def _flat_any(grid, f: NetworkField):
    # sources need not be continuous; node slots are overwritten anyway
    out = np.zeros(grid.n_dof)
    for e, idx in grid.edge_index.items():
        out[idx[1:-1]] = f.values[e][1:-1]
    return out


def interior_potential(grid, p):
    """Potential at interior dofs (node slots zero: the node rule does not use p)."""
    p = as_field(grid, p, "potential")
    out = np.zeros(grid.n_dof)
    for e, idx in grid.edge_index.items():
        out[idx[1:-1]] = p.values[e][1:-1]
    return out


def solve_wave(grid: NetworkGrid, p=None, u0=None, u1=None, h=None, source=None,
               external="dirichlet") -> SolutionField:
    """Leapfrog solution of the network wave equation.

    ``external`` is ``"dirichlet"`` (data ``h``, default homogeneous) or
    ``"neumann"`` (zero outward derivative at every external node; ``h`` must
    then be None).
    """
    if grid.cfl > 1 + 1e-12:
        raise CFLError(f"CFL number {grid.cfl:.4f} exceeds 1")
    if external not in ("dirichlet", "neumann"):
        raise ValidationError(f"unknown external condition {external!r}")
    tree = grid.tree
    ext = tree.external_nodes
    u0f = as_field(grid, u0, "u0").to_flat(name="u0")
    u1f = as_field(grid, u1, "u1").to_flat(name="u1")
    if np.iscomplexobj(u0f) or np.iscomplexobj(u1f):
        raise ValidationError("wave initial data must be real")
    pf = interior_potential(grid, p)
    src = _source_fn(grid, source)

    if external == "dirichlet":
        H = boundary_series(grid, h, ext)
        ext_dofs = np.array([grid.node_pos[n] for n in ext], dtype=np.intp)
        mismatch = np.abs(H[0] - u0f[ext_dofs]) if len(ext) else np.zeros(0)
        if mismatch.size and mismatch.max() > COMPAT_TOL:
            bad = ext[int(np.argmax(mismatch))]
            raise ValidationError(
                f"incompatible data at {bad!r}: h(0) differs from u0 by {mismatch.max():.3g}")
        node_solver = NodeSolver(grid, tree.internal_nodes)
    else:
        if h:
            raise ValidationError("Dirichlet data given together with Neumann external nodes")
        H = None
        ext_dofs = np.zeros(0, dtype=np.intp)
        node_solver = NodeSolver(grid, tree.internal_nodes + ext)

    L = laplacian_rows(grid)
    dt2 = grid.dt ** 2
    U = np.empty((grid.nt + 1, grid.n_dof))
    U[0] = u0f
    if H is not None:
        U[0, ext_dofs] = H[0]

    acc = L @ U[0] - pf * U[0]
    if src is not None:
        acc += src(0)
    U[1] = U[0] + grid.dt * u1f + 0.5 * dt2 * acc
    node_solver.apply(U[1])
    if H is not None:
        U[1, ext_dofs] = H[1]

    for k in range(1, grid.nt):
        acc = L @ U[k] - pf * U[k]
        if src is not None:
            acc += src(k)
        nxt = U[k + 1]
        np.multiply(U[k], 2.0, out=nxt)
        nxt -= U[k - 1]
        nxt += dt2 * acc
        node_solver.apply(nxt)
        if H is not None:
            nxt[ext_dofs] = H[k + 1]

    if not np.all(np.isfinite(U[-1])):
        from .errors import NumericalError
        raise NumericalError("wave solution became non-finite")
    meta = {"equation": "wave", "external": external}
    return SolutionField(grid, "wave", U, meta)
