"""Space-time discretization of a metric tree and fields sampled on it.

A :class:`NetworkGrid` gives every edge a uniform grid with both endpoints
included.  Internally, continuous fields (solutions, initial data) live in a
flat vector where each node owns exactly one slot, so continuity at the nodes
holds by construction.  Potentials may jump between edges at a node, so they
stay per-edge (:class:`NetworkField`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graph import MetricTree


@dataclass(frozen=True, eq=False)
class NetworkGrid:
    tree: MetricTree
    cells: dict          # edge id -> cell count m_j
    dt: float
    nt: int              # number of time steps; horizon T = nt * dt

    def __post_init__(self):
        node_pos = {n: i for i, n in enumerate(self.tree.node_ids)}
        edge_index, x = {}, {}
        nxt = len(node_pos)
        for e in self.tree.edges:
            m = self.cells[e.id]
            idx = np.empty(m + 1, dtype=np.intp)
            idx[0] = node_pos[e.start]
            idx[-1] = node_pos[e.end]
            idx[1:-1] = np.arange(nxt, nxt + m - 1)
            nxt += m - 1
            edge_index[e.id] = idx
            x[e.id] = np.linspace(0.0, e.length, m + 1)
        object.__setattr__(self, "node_pos", node_pos)
        object.__setattr__(self, "edge_index", edge_index)
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "n_dof", nxt)

    @property
    def T(self):
        return self.nt * self.dt

    @property
    def times(self):
        return np.arange(self.nt + 1) * self.dt

    def dx(self, edge_id):
        e = self.tree.edge(edge_id)
        return e.length / self.cells[edge_id]

    @property
    def min_dx(self):
        return min(self.dx(e) for e in self.tree.edge_ids)

    @property
    def cfl(self):
        return self.dt / self.min_dx

    def x(self, edge_id):
        return self._x[edge_id]

    def with_time(self, dt=None, T=None):
        """Same spatial grid, new time axis; ``T`` is hit exactly by shrinking ``dt``."""
        dt = self.dt if dt is None else dt
        T = self.T if T is None else T
        nt = max(1, math.ceil(T / dt - 1e-9))
        return NetworkGrid(self.tree, dict(self.cells), T / nt, nt)

    def interior_mask(self):
        mask = np.ones(self.n_dof, dtype=bool)
        mask[: len(self.node_pos)] = False
        return mask

    def trapezoid_weights(self):
        """Quadrature weights w such that sum(w * f_flat) is the trapezoid rule on every edge."""
        w = np.zeros(self.n_dof)
        for e in self.tree.edges:
            h = self.dx(e.id)
            ew = np.full(self.cells[e.id] + 1, h)
            ew[0] = ew[-1] = h / 2
            np.add.at(w, self.edge_index[e.id], ew)
        return w

    def __repr__(self):
        return (f"NetworkGrid(edges={len(self.cells)}, n_dof={self.n_dof}, "
                f"dt={self.dt:.4g}, nt={self.nt}, cfl={self.cfl:.3f})")


def discretize(g: MetricTree, target_dx=None, cfl=0.8, T=None) -> NetworkGrid:
    """Uniform per-edge grids with m_j = max(4, round(l_j / target_dx)) cells.

    The time step is ``cfl * min_j dx_j``; when ``T`` is given the step is
    shrunk just enough that ``T`` is an integer number of steps.
    """
    if not 0 < cfl <= 1:
        raise ValidationError(f"cfl must be in (0, 1], got {cfl}")
    if target_dx is None:
        target_dx = min(e.length for e in g.edges) / 40
    if target_dx <= 0:
        raise ValidationError("target_dx must be positive")
    cells = {e.id: max(4, int(round(e.length / target_dx))) for e in g.edges}
    min_dx = min(e.length / cells[e.id] for e in g.edges)
    dt = cfl * min_dx
    if T is None:
        return NetworkGrid(g, cells, dt, 1)
    nt = max(1, math.ceil(T / dt - 1e-9))
    return NetworkGrid(g, cells, T / nt, nt)


def resample(samples, length, s):
    """Piecewise-linear interpolation of uniform samples on [0, length] at points ``s``."""
    samples = np.asarray(samples)
    xs = np.linspace(0.0, length, len(samples))
    if np.iscomplexobj(samples):
        return np.interp(s, xs, samples.real) + 1j * np.interp(s, xs, samples.imag)
    return np.interp(s, xs, samples)


@dataclass(eq=False)
class NetworkField:
    """Per-edge samples aligned with ``grid`` (edge orientation start -> end)."""
    grid: NetworkGrid
    values: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, grid, dtype=float):
        return cls(grid, {e: np.zeros(grid.cells[e] + 1, dtype=dtype) for e in grid.cells})

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, {e: np.full(grid.cells[e] + 1, c) for e in grid.cells})

    @classmethod
    def from_function(cls, grid, f):
        """``f(edge_id, s)`` evaluated at each edge's grid points (s = arclength from start)."""
        vals = {}
        for e in grid.tree.edge_ids:
            s = grid.x(e)
            vals[e] = np.broadcast_to(np.asarray(f(e, s)), s.shape).copy()
        return cls(grid, vals)

    @classmethod
    def from_samples(cls, grid, samples, default=0.0):
        """Interpolate ``{edge: uniform samples on [0, l]}`` onto the grid."""
        vals = {}
        for e in grid.tree.edges:
            s = grid.x(e.id)
            if e.id in samples:
                vals[e.id] = resample(samples[e.id], e.length, s)
            else:
                vals[e.id] = np.full(s.shape, default, dtype=float)
        return cls(grid, vals)

    @classmethod
    def from_tree_potentials(cls, grid):
        return cls.from_samples(grid, grid.tree.potentials)

    @classmethod
    def from_flat(cls, grid, vec):
        vec = np.asarray(vec)
        return cls(grid, {e: vec[idx].copy() for e, idx in grid.edge_index.items()})

    @property
    def is_complex(self):
        return any(np.iscomplexobj(v) for v in self.values.values())

    def __getitem__(self, edge_id):
        return self.values[edge_id]

    def continuity_residual(self):
        """Largest disagreement between edge endpoint samples at a shared node."""
        seen = {}
        worst = 0.0
        for e in self.grid.tree.edges:
            v = self.values[e.id]
            for node, val in ((e.start, v[0]), (e.end, v[-1])):
                if node in seen:
                    worst = max(worst, abs(val - seen[node]))
                else:
                    seen[node] = val
        return worst

    def to_flat(self, tol=1e-8, name="field"):
        """Flatten to one value per node; raises if the field is discontinuous at a node."""
        self._check_shapes(name)
        bad = self.continuity_residual()
        if bad > tol:
            raise ValidationError(f"{name} is discontinuous at a node (jump {bad:.3g})")
        dtype = complex if self.is_complex else float
        out = np.zeros(self.grid.n_dof, dtype=dtype)
        for e, idx in self.grid.edge_index.items():
            out[idx] = self.values[e]
        return out

    def _check_shapes(self, name="field"):
        for e, m in self.grid.cells.items():
            if e not in self.values:
                raise ValidationError(f"{name} has no samples for edge {e!r}")
            if np.shape(self.values[e]) != (m + 1,):
                raise ValidationError(
                    f"{name} on edge {e!r} has shape {np.shape(self.values[e])}, expected {(m + 1,)}")

    def max_abs(self):
        return max(float(np.max(np.abs(v))) for v in self.values.values())

    def map(self, fn):
        return NetworkField(self.grid, {e: fn(v) for e, v in self.values.items()})

    def __add__(self, other):
        return NetworkField(self.grid, {e: v + other.values[e] for e, v in self.values.items()})

    def __sub__(self, other):
        return NetworkField(self.grid, {e: v - other.values[e] for e, v in self.values.items()})

    def __mul__(self, c):
        if isinstance(c, NetworkField):
            return NetworkField(self.grid, {e: v * c.values[e] for e, v in self.values.items()})
        return NetworkField(self.grid, {e: v * c for e, v in self.values.items()})

    __rmul__ = __mul__


def as_field(grid, value, name="field"):
    """Accept None (zero), a scalar, a callable ``f(edge, s)`` or a NetworkField."""
    if value is None:
        return NetworkField.zeros(grid)
    if isinstance(value, NetworkField):
        if value.grid is not grid:
            # same tree and cell counts is good enough
            if value.grid.cells != grid.cells or value.grid.tree is not grid.tree:
                raise ValidationError(f"{name} is not aligned with the grid")
            value = NetworkField(grid, value.values)
        value._check_shapes(name)
        return value
    if callable(value):
        return NetworkField.from_function(grid, value)
    if np.isscalar(value):
        return NetworkField.constant(grid, value)
    raise ValidationError(f"cannot interpret {name} of type {type(value).__name__}")


@dataclass(eq=False)
class SolutionField:
    """Snapshots ``values[k]`` (flat layout) at t_k = k * dt, k = 0..nt."""
    grid: NetworkGrid
    kind: str
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.grid.times

    def edge_values(self, edge_id):
        """Array of shape (nt + 1, m_j + 1) in edge orientation."""
        return self.values[:, self.grid.edge_index[edge_id]]

    def node_values(self, node_id):
        return self.values[:, self.grid.node_pos[node_id]]

    def snapshot(self, k):
        return NetworkField.from_flat(self.grid, self.values[k])

    def continuity_residual(self):
        # flat storage shares node slots, but keep the check honest: compare
        # every edge's endpoint samples with the node slot.
        worst = 0.0
        for e in self.grid.tree.edges:
            ev = self.edge_values(e.id)
            worst = max(worst,
                        float(np.max(np.abs(ev[:, 0] - self.node_values(e.start)))),
                        float(np.max(np.abs(ev[:, -1] - self.node_values(e.end)))))
        return worst
