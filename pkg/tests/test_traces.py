import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from treewave import NoiseSpec, TraceRecord, ValidationError, add_noise, norm_H1_time, norm_L2_time, reznitzkaya
from treewave.traces import (DIRICHLET, NEUMANN, projected_noise_norm, read_traces_csv, required_tau_max,
                             rms, write_traces_csv)


def tr(values, dt=0.01, kind=NEUMANN, node="Q1", edge="e1"):
    return TraceRecord(node, edge, kind, dt, np.asarray(values, dtype=float))


@given(vals=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=40), dt=st.floats(1e-4, 1.0))
def test_csv_roundtrip_exact(vals, dt, tmp_path_factory):
    a = tr(vals, dt)
    b = tr(np.asarray(vals) * 2, dt, DIRICHLET, "Q2", None)
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    write_traces_csv(path, [a, b])
    back = read_traces_csv(path)
    assert [(r.node, r.edge, r.kind) for r in back] == [("Q1", "e1", NEUMANN), ("Q2", None, DIRICHLET)]
    assert np.array_equal(back[0].values, a.values) and np.array_equal(back[1].values, b.values)


def test_csv_rejects_nonuniform(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,Q1\n0,1\n0.1,2\n0.3,3\n")
    with pytest.raises(ValidationError):
        read_traces_csv(p)


def test_norms_on_known_functions():
    t = np.linspace(0, 1, 2001)
    a = tr(np.sin(np.pi * t), t[1])
    assert norm_L2_time(a) == pytest.approx(math.sqrt(0.5), rel=1e-6)
    assert norm_H1_time(a) == pytest.approx(math.sqrt(0.5 + np.pi ** 2 / 2), rel=1e-5)


def test_noise_reproducible_and_scaled():
    a = tr(np.sin(np.linspace(0, 10, 5001)))
    n1, n2 = add_noise(a, NoiseSpec(0.05, 3)), add_noise(a, NoiseSpec(0.05, 3))
    assert np.array_equal(n1.values, n2.values)
    assert rms(n1.values - a.values) == pytest.approx(0.05 * rms(a.values), rel=0.05)
    assert np.array_equal(add_noise(a, NoiseSpec(0.0, 1)).values, a.values)


@given(st.floats(0.02, 0.1), st.integers(20, 60))
def test_project_reproduces_cubics(dt_new, _n):
    t = np.arange(0, 3.0 + 1e-12, 0.002)
    f = lambda x: 1 - 2 * x + 0.5 * x ** 3
    a = tr(f(t), 0.002)
    count = int(math.floor(a.T / dt_new + 1e-9)) + 1
    p = a.project(dt_new, count)
    assert np.abs(p.values - f(p.times)).max() < 1e-8


def test_project_averages_noise():
    t = np.arange(0, 2.0 + 1e-12, 0.001)
    clean = tr(np.cos(3 * t), 0.001)
    noisy = add_noise(clean, NoiseSpec(0.1, 0))
    p = noisy.project(0.05, 41)
    err = p.values - np.cos(3 * p.times)
    sigma = 0.1 * rms(clean.values)
    expected = projected_noise_norm(noisy, 0.05, 41, sigma)
    got = norm_L2_time(p.with_values(err))
    assert 0.4 * expected < got < 2.5 * expected
    assert got < 0.3 * sigma * math.sqrt(2.0)


def test_reznitzkaya_of_linear_trace():
    # w(tau) = tau transforms to the constant 1
    need = required_tau_max(1.0)
    dt = 0.005
    w = tr(np.arange(0, need + 0.1, dt), dt, DIRICHLET)
    out = reznitzkaya(w, np.linspace(0.1, 1, 10))
    assert np.abs(out.values - 1).max() < 1e-5
    short = tr(np.arange(0, 3, dt), dt, DIRICHLET)
    with pytest.raises(ValidationError):
        reznitzkaya(short, np.linspace(0.1, 1, 10))


def test_trace_arithmetic_checks_alignment():
    with pytest.raises(ValidationError):
        tr([1, 2, 3]) - tr([1, 2, 3], dt=0.02)
    assert np.array_equal((tr([1, 2]) - tr([1, 1])).values, [0, 1])
