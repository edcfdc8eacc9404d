import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from treewave import (CFLError, NetworkField, ValidationError, discretize, extract_trace, single_edge,
                      solve_wave, star_tree)
from treewave.diagnostics import energy, energy_series, kirchhoff_residual
from treewave.fields import NetworkGrid
from treewave.graph import tree_from_edges
from treewave.traces import DIRICHLET, NEUMANN

from oracles import dalembert_free, leapfrog_1d


def test_matches_dense_oracle():
    g = single_edge(1.0)
    grid = discretize(g, 0.05, 0.9, 1.3)
    x = grid.x("e0")
    p = 1 + x ** 2
    u0 = np.sin(np.pi * x) + x
    u1 = np.cos(x)
    h = {"A": lambda t: 0.0 * t, "B": lambda t: 1.0 + t * np.cos(1.0) + 0 * t}
    sol = solve_wave(grid, lambda e, s: 1 + s ** 2, lambda e, s: np.sin(np.pi * s) + s,
                     lambda e, s: np.cos(s), h)
    left = np.zeros(grid.nt + 1)
    right = 1 + grid.times * math.cos(1.0)
    ref = leapfrog_1d(p, u0, u1, left, right, grid.dx("e0"), grid.dt, grid.nt)
    assert np.abs(sol.edge_values("e0") - ref).max() < 1e-12


def test_dalembert_through_a_degree_two_node():
    # two collinear edges joined at an internal node behave like one interval
    g = tree_from_edges([("a", "L", "M", 0.7), ("b", "M", "R", 1.3)])
    grid = discretize(g, 0.005, 1.0, 0.5)
    f = lambda s: np.exp(-200 * (s - 0.8) ** 2)
    sol = solve_wave(grid, None, lambda e, s: f(s if e == "a" else s + 0.7), None, None)
    xs = grid.x("b") + 0.7
    assert np.abs(sol.edge_values("b")[-1] - dalembert_free(f, xs, grid.T)).max() < 2e-3


def test_star_symmetry():
    # identical edges and identical data: the center node sees a symmetric field
    g = star_tree((1.0, 1.0, 1.0))
    grid = discretize(g, 0.02, 0.8, 2.0)
    sol = solve_wave(grid, 1.0, lambda e, s: np.cos(np.pi * s / 2), None, None)
    a, b, c = (sol.edge_values(e) for e in ("e1", "e2", "e3"))
    assert np.abs(a - b).max() < 1e-13 and np.abs(a - c).max() < 1e-13
    # with three equal edges the Kirchhoff law forces u_x(center) = 0: a Neumann reflection
    assert max(r.values[1:].max() for r in kirchhoff_residual(sol).values()) < 1e-10


def test_cfl_violation():
    g = single_edge(1.0)
    grid = discretize(g, 0.1, 1.0, 1.0)
    bad = NetworkGrid(g, grid.cells, grid.dt * 1.2, grid.nt)
    with pytest.raises(CFLError):
        solve_wave(bad)


def test_incompatible_dirichlet_rejected():
    grid = discretize(single_edge(1.0), 0.1, 0.8, 1.0)
    with pytest.raises(ValidationError):
        solve_wave(grid, None, 1.0, None, {"A": 0.0, "B": 0.0})


def test_neumann_conserves_constant_velocity():
    grid = discretize(star_tree((0.5, 1.0, 0.7)), 0.01, 0.8, 1.0)
    sol = solve_wave(grid, None, None, 1.0, None, external="neumann")
    assert np.allclose(sol.values[-1], grid.T, atol=1e-12)


@given(st.floats(0.3, 2.0), st.floats(0.0, 3.0))
def test_energy_bounded_with_potential(length, p0):
    # with p >= 0 and homogeneous Dirichlet data, E + int p u^2 is conserved; E itself stays bounded
    grid = discretize(single_edge(length), length / 40, 0.8, 2 * length)
    sol = solve_wave(grid, p0, lambda e, s: np.sin(np.pi * s / length), None, None)
    E = energy_series(sol)
    assert E.max() <= E[0] * (1 + 2 * p0 * length ** 2 / np.pi ** 2) * 1.01


def test_energy_single_index():
    grid = discretize(single_edge(1.0), 0.01, 0.8, 1.0)
    sol = solve_wave(grid, None, lambda e, s: np.sin(np.pi * s), None, None)
    assert energy(sol, 5) == pytest.approx(np.pi ** 2 / 2, rel=1e-3)
    with pytest.raises(IndexError):
        energy(sol, 0)


def test_outward_sign():
    # u = s on the edge (static since u_xx = 0, p = 0): outward derivative is -1 at A and +1 at B
    grid = discretize(single_edge(1.0), 0.05, 0.8, 0.5)
    sol = solve_wave(grid, None, lambda e, s: s, None, {"A": 0.0, "B": 1.0})
    assert np.allclose(extract_trace(sol, "A", NEUMANN).values, -1.0)
    assert np.allclose(extract_trace(sol, "B", NEUMANN).values, 1.0)
    assert np.allclose(extract_trace(sol, "B", DIRICHLET).values, 1.0)


def test_field_from_function_and_continuity():
    grid = discretize(star_tree(), 0.1)
    f = NetworkField.from_function(grid, lambda e, s: 1 + s)
    assert f.continuity_residual() == 0.0
    with pytest.raises(ValidationError):
        NetworkField.from_function(grid, lambda e, s: s + (e == "e1")).to_flat()
