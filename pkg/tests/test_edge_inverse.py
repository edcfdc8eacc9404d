
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treewave import EdgeInverseProblem, InverseConfig, ValidationError, edge_misfit, edge_transfer, \
    recover_edge_potential
from treewave.edge_inverse import (edge_forward, extension_matrix, near_flux, far_flux, valid_far_count)
from treewave.traces import DIRICHLET, NEUMANN, TraceRecord

from oracles import leapfrog_1d

CELLS = 30
T = 2.5


def crime_problem(p_fn, far_known=True, u0_fn=lambda s: 2 + np.cos(np.pi * s)):
    """Data generated by the inversion's own forward map at dt = dx (an inverse crime)."""
    x = np.linspace(0, 1, CELLS + 1)
    dt = 1.0 / CELLS
    nt = int(round(T / dt))
    left = np.full(nt + 1, u0_fn(0.0))
    right = np.full(nt + 1, u0_fn(1.0))
    U = edge_forward(p_fn(x), 1.0, dt, nt, u0_fn(x), 0 * x, left, right)
    rec = lambda kind, v, node: TraceRecord(node, "e0", kind, dt, v)
    far = rec(DIRICHLET, right, "B") if far_known else None
    prob = EdgeInverseProblem(1.0, rec(DIRICHLET, left, "A"), rec(NEUMANN, near_flux(U, dt), "A"),
                              u0_fn(x), far_dirichlet=far)
    return prob, x, U


def test_edge_forward_matches_oracle():
    x = np.linspace(0, 1, 21)
    p = 1 + x
    left, right = np.linspace(0, 1, 41), np.ones(41)
    U = edge_forward(p, 1.0, 0.04, 40, x, 0 * x, left, right)
    ref = leapfrog_1d(p, x, 0 * x, left, right, 0.05, 0.04, 40)
    assert np.abs(U - ref).max() < 1e-12


def test_flux_stencils_on_quadratic():
    x = np.linspace(0, 2, 11)
    U = (x ** 2)[None, :]
    assert near_flux(U, 0.2)[0] == pytest.approx(0.0, abs=1e-12)      # -u'(0) = 0
    assert far_flux(U, 0.2)[0] == pytest.approx(4.0)                   # +u'(2) = 4


def test_inverse_crime_known_far_is_exact():
    p_fn = lambda s: 1 + np.sin(np.pi * s)
    prob, x, _ = crime_problem(p_fn, True)
    p_hat, rec = recover_edge_potential(prob, InverseConfig(alpha=0.0, target_dx=1 / CELLS))
    assert np.abs(p_hat[1:-1] - p_fn(x)[1:-1]).max() < 1e-6
    assert rec.converged


def test_inverse_crime_free_far():
    # with a free far trace the last interior value is extrapolated: exact only for locally linear p
    lin = lambda s: 1 + 0.5 * s
    prob, x, _ = crime_problem(lin, False)
    p_hat, _ = recover_edge_potential(prob, InverseConfig(alpha=0.0, target_dx=1 / CELLS))
    assert np.abs(p_hat - lin(x)).max() < 1e-6
    curved = lambda s: 1 + np.sin(np.pi * s)
    prob, x, _ = crime_problem(curved, False)
    p_hat, _ = recover_edge_potential(prob, InverseConfig(alpha=0.0, target_dx=1 / CELLS))
    assert np.abs(p_hat[1:-2] - curved(x)[1:-2]).max() < 1e-3


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_gradient_matches_finite_differences(seed):
    prob, x, _ = crime_problem(lambda s: 1 + 0 * s, far_known=False)
    rng = np.random.default_rng(seed)
    p = 1 + 0.3 * rng.standard_normal(x.size)
    b = 1 + 0.01 * rng.standard_normal(prob.nt + 1)
    m = edge_misfit(p, prob, alpha=1e-2, far=b, gamma=1e-3)
    v = rng.standard_normal(x.size)
    eps = 1e-6
    fd = (edge_misfit(p + eps * v, prob, 1e-2, b, gamma=1e-3).value
          - edge_misfit(p - eps * v, prob, 1e-2, b, gamma=1e-3).value) / (2 * eps)
    assert fd == pytest.approx(m.grad @ v, rel=1e-4, abs=1e-9)


def test_extension_matrix():
    E, free = extension_matrix(10, far_known=True)
    lin = np.linspace(0, 1, 11)
    assert np.allclose(E @ lin[free], lin)
    E2, free2 = extension_matrix(10, far_known=False)
    assert E2.shape == (11, 8) and np.allclose(E2 @ lin[free2], lin)


def test_transfer_of_truth_gives_far_data():
    p_fn = lambda s: 1 + 0.5 * s
    prob, x, U = crime_problem(p_fn, far_known=False)
    d, n = edge_transfer(p_fn(x), prob, "B", far_dirichlet=U[:, -1], edge="e0")
    k = d.count
    assert np.allclose(d.values, U[:k, -1]) and np.allclose(n.values, far_flux(U, 1 / CELLS)[:k])
    # without a far trace, only the part up to T - l (minus the margin) is returned
    d2, n2 = edge_transfer(p_fn(x), prob, "B", edge="e0")
    count = valid_far_count(prob.T, 1.0, prob.dt)
    assert d2.count == count
    assert np.abs(n2.values - far_flux(U, 1 / CELLS)[:count]).max() < 1e-6


def test_validation():
    prob, x, _ = crime_problem(lambda s: 1 + 0 * s)
    with pytest.raises(ValidationError):
        EdgeInverseProblem(2.0, prob.near_dirichlet, prob.near_neumann, prob.u0)    # T < 2 l
    with pytest.raises(ValidationError):
        EdgeInverseProblem(1.0, prob.near_dirichlet, prob.near_neumann, prob.u0, r=2.5)
    with pytest.raises(ValidationError):
        InverseConfig(alpha=-1)
    with pytest.raises(ValidationError):
        edge_misfit(np.ones(3), prob)


def test_bound_M_is_respected():
    prob, x, _ = crime_problem(lambda s: 1 + np.sin(np.pi * s))
    p_hat, _ = recover_edge_potential(prob, InverseConfig(alpha=0.0, target_dx=1 / CELLS))
    prob.M = 1.5
    p_box, _ = recover_edge_potential(prob, InverseConfig(alpha=0.0, target_dx=1 / CELLS))
    assert np.abs(p_box).max() <= 1.5 + 1e-12 < np.abs(p_hat).max()
