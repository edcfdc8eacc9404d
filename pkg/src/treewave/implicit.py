"""Implicit one-step solvers (heat, Schrödinger) on a metric tree.

Spatial operator: lumped-mass finite differences where every node carries the
control volume sum_j dx_j / 2 of its incident half-cells.  The node row is the
discrete flux balance

    (sum_j dx_j / 2) U' = sum_j (u_1^j - U) / dx_j - (sum_j dx_j p_j(P) / 2) U,

i.e. Kirchhoff with the half-cell correction.  At an external node the same
row is the ghost-reflection zero-Neumann condition.  With M the (diagonal)
trapezoid mass and K the symmetric stiffness plus potential, the semidiscrete
systems are

    heat:          M u' = -K u
    Schrödinger:   M u' =  i K u      (from i u_t - u_xx + p u = 0)

so total heat is conserved exactly for p = 0 and Crank-Nicolson is unitary in
the trapezoid L2 norm.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError, ValidationError
from .fields import NetworkGrid, SolutionField, as_field
from .wave import COMPAT_TOL, boundary_series


def assemble(grid: NetworkGrid, p=None):
    """Return (mass diagonal, K) with K = stiffness + lumped potential, K symmetric."""
    p = as_field(grid, p, "potential")
    if p.is_complex:
        raise ValidationError("potential must be real")
    mass = grid.trapezoid_weights()
    rows, cols, vals = [], [], []
    pot = np.zeros(grid.n_dof)
    for e in grid.tree.edges:
        idx = grid.edge_index[e.id]
        h = grid.dx(e.id)
        a, b = idx[:-1], idx[1:]
        inv = np.full(a.size, 1.0 / h)
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [inv, inv, -inv, -inv]
        w = np.full(idx.size, h)
        w[0] = w[-1] = h / 2
        np.add.at(pot, idx, w * p.values[e.id])
    rows, cols, vals = (np.concatenate(x) for x in (rows, cols, vals))
    K = sp.csr_matrix((vals, (rows, cols)), shape=(grid.n_dof, grid.n_dof))
    K = K + sp.diags(pot)
    return mass, K.tocsc()


def _factor(A, grid):
    try:
        return spla.splu(A.tocsc())
    except RuntimeError as exc:
        diag = np.abs(A.diagonal())
        zero = [n for n, k in grid.node_pos.items() if k < diag.size and diag[k] == 0]
        where = f" (zero pivot at node {zero[0]!r})" if zero else ""
        raise NumericalError(f"singular system{where}: {exc}") from exc


def solve_heat(grid: NetworkGrid, p=None, u0=None) -> SolutionField:
    """Implicit Euler for u_t - u_xx + p u = 0 with zero Neumann at external nodes."""
    u = as_field(grid, u0, "u0").to_flat(name="u0")
    if np.iscomplexobj(u):
        raise ValidationError("heat initial data must be real")
    mass, K = assemble(grid, p)
    lu = _factor(sp.diags(mass) + grid.dt * K, grid)
    U = np.empty((grid.nt + 1, grid.n_dof))
    U[0] = u
    for k in range(grid.nt):
        U[k + 1] = lu.solve(mass * U[k])
    if not np.all(np.isfinite(U[-1])):
        raise NumericalError("heat solution became non-finite")
    return SolutionField(grid, "heat", U, {"equation": "heat", "external": "neumann"})


def solve_schrodinger(grid: NetworkGrid, p=None, u0=None, h=None) -> SolutionField:
    """Crank-Nicolson for i u_t - u_xx + p u = 0, Dirichlet ``h`` at external nodes."""
    u = as_field(grid, u0, "u0").to_flat(name="u0").astype(complex)
    ext = grid.tree.external_nodes
    H = boundary_series(grid, h, ext, dtype=complex)
    bdofs = np.array([grid.node_pos[n] for n in ext], dtype=np.intp)
    if bdofs.size:
        gap = np.abs(H[0] - u[bdofs])
        if gap.max() > COMPAT_TOL:
            raise ValidationError(
                f"incompatible data at {ext[int(np.argmax(gap))]!r}: h(0) differs from u0")
    free = np.setdiff1d(np.arange(grid.n_dof), bdofs)
    mass, K = assemble(grid, p)
    K = K.tocsr()
    K_ff = K[free][:, free]
    K_fb = K[free][:, bdofs]
    M_ff = sp.diags(mass[free])
    half = 0.5j * grid.dt
    lu = _factor((M_ff - half * K_ff).astype(complex), grid)
    B = (M_ff + half * K_ff).tocsr()
    U = np.empty((grid.nt + 1, grid.n_dof), dtype=complex)
    U[0] = u
    U[0, bdofs] = H[0]
    for k in range(grid.nt):
        rhs = B @ U[k, free]
        if bdofs.size:
            rhs += half * (K_fb @ (H[k] + H[k + 1]))
        U[k + 1, free] = lu.solve(rhs)
        U[k + 1, bdofs] = H[k + 1]
    if not np.all(np.isfinite(U[-1])):
        raise NumericalError("Schrödinger solution became non-finite")
    return SolutionField(grid, "schrodinger", U, {"equation": "schrodinger", "external": "dirichlet"})
