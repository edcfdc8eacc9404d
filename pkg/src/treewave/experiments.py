"""Experiment runners for the energy, observability, stability and uniqueness
estimates, plus the random smooth inputs they are fed with.

Inputs on the tree are callables ``f(edge_id, s)`` with s the arclength from
the edge's start node; they work with every solver through ``as_field``.
"""
from __future__ import annotations

import math

import numpy as np

from ._pool import pmap
from .diagnostics import extract_trace
from .fields import NetworkField, NetworkGrid, as_field, discretize
from .graph import MetricTree, require_valid
from .implicit import solve_heat, solve_schrodinger
from .report import AGGREGATORS, ExperimentReport, Timer
from .traces import (DIRICHLET, NEUMANN, NoiseSpec, add_noise, norm_H1_space,
                     norm_H1_time, norm_L2_space, norm_L2_time, time_derivative)
from .wave import interior_potential, solve_wave

OMEGA = 2.0


# ---------------------------------------------------------------------------
# random smooth inputs

def fourier_potential(g: MetricTree, rng, M=3.0, modes=3, mean=1.0, scale=1.0):
    """Per-edge clipped low-order Fourier series

        p_j(s) = c_j + sum_k a_jk cos(k pi s / l_j) + b_jk sin(k pi s / l_j),

    c_j ~ mean + scale U(-1, 1), a_jk, b_jk ~ scale U(-1, 1) / k, clipped to
    [-M, M].  Jumps between edges at a node are allowed.
    """
    rng = np.random.default_rng(rng)
    k = np.arange(1, modes + 1)
    coef = {}
    for e in g.edges:
        c = mean + scale * rng.uniform(-1, 1)
        a = scale * rng.uniform(-1, 1, modes) / k
        b = scale * rng.uniform(-1, 1, modes) / k
        coef[e.id] = (c, a, b, e.length)

    def p(edge, s):
        c, a, b, ln = coef[edge]
        x = np.asarray(s, dtype=float)[..., None] * k * np.pi / ln
        return np.clip(c + (np.cos(x) @ a) + (np.sin(x) @ b), -M, M)

    p.coef = coef
    return p


def node_continuous_potential(g: MetricTree, rng, M=3.0, low=0.5, high=2.0, amp=0.8, modes=1):
    """Random smooth potential that is continuous at every node.

    Node values v ~ U(low, high) joined linearly along each edge plus a sine
    series vanishing at both ends (amplitudes U(-amp, amp) / k), clipped to
    [-M, M].  Continuity keeps wave data with u0 = const compatible at the
    nodes, which the per-edge inversion relies on.
    """
    rng = np.random.default_rng(rng)
    v = {n: rng.uniform(low, high) for n in g.node_ids}
    k = np.arange(1, modes + 1)
    coef = {e.id: rng.uniform(-amp, amp, modes) / k for e in g.edges}
    ends = {e.id: (v[e.start], v[e.end], e.length) for e in g.edges}

    def p(edge, s):
        a, b, ln = ends[edge]
        x = np.asarray(s, dtype=float) / ln
        bump = np.sin(x[..., None] * k * np.pi) @ coef[edge]
        return np.clip((1 - x) * a + x * b + bump, -M, M)

    p.node_values = v
    return p


def perturbed_unit(g: MetricTree, rng, amp=0.1):
    """u0 = 1 + amp * c_j sin(pi s / l_j), c_j ~ U(-1, 1): continuous, |u0| >= 1 - amp."""
    rng = np.random.default_rng(rng)
    c = {e.id: rng.uniform(-1, 1) for e in g.edges}
    ln = {e.id: e.length for e in g.edges}

    def u0(edge, s):
        return 1.0 + amp * c[edge] * np.sin(np.pi * np.asarray(s, dtype=float) / ln[edge])

    return u0


def _as_callable(f):
    if f is None:
        return lambda e, s: np.zeros_like(np.asarray(s, dtype=float))
    if callable(f):
        return f
    return lambda e, s, c=float(f): np.full_like(np.asarray(s, dtype=float), c)


def compatible_dirichlet(g: MetricTree, p, u0, omega=OMEGA):
    """Dirichlet inputs h_Q(t) = u0(Q) + (u0''(Q) - p(Q) u0(Q)) (1 - cos(omega t)) / omega^2.

    With u1 = 0 this matches u, u_t and u_tt of the wave equation at t = 0,
    so no corner singularity is launched from the external nodes.
    """
    p, u0 = _as_callable(p), _as_callable(u0)
    out = {}
    for q in g.external_nodes:
        e = g.incident(q)[0]
        hstep = 1e-3 * e.length
        s = hstep * np.arange(4)
        if q == e.end:
            s = e.length - s
        f = np.asarray(u0(e.id, s), dtype=float)
        d2 = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / hstep ** 2
        c = d2 - float(np.asarray(p(e.id, s[:1]))[0]) * f[0]
        out[q] = (lambda c0, c2: lambda t: c0 + c2 * (1 - np.cos(omega * np.asarray(t))) / omega ** 2)(f[0], c)
    return out


def measured_nodes(g: MetricTree, excluded=None):
    ext = g.external_nodes
    if excluded is None:
        excluded = ext[-1]
    return [q for q in ext if q != excluded], excluded


def default_horizon(g: MetricTree, excluded):
    """2.5 x twice the metric depth seen from the excluded node."""
    return 2.5 * 2 * max(g.distances_from(excluded).values())


# ---------------------------------------------------------------------------
# trace estimate (hidden regularity)

def trace_estimate_ratio(grid: NetworkGrid, p=None, u0=None, u1=None, source=None):
    """sum_Q |d_x u(Q)|^2_{L2(0,T)} / (|u0|^2_{H1_0} + |u1|^2_{L2} + |g|^2_{L1(0,T;L2)})

    over all external nodes, homogeneous Dirichlet data.  ``source`` is a
    callable ``g(edge, s, t)`` or None.
    """
    src = None
    g_norm = 0.0
    if source is not None:
        src = lambda t: NetworkField.from_function(grid, lambda e, s: source(e, s, t))
        norms = np.array([norm_L2_space(src(t)) for t in grid.times])
        g_norm = grid.dt * (norms.sum() - 0.5 * (norms[0] + norms[-1]))
    u0f, u1f = as_field(grid, u0, "u0"), as_field(grid, u1, "u1")
    sol = solve_wave(grid, p, u0f, u1f, None, src)
    num = sum(norm_L2_time(extract_trace(sol, q, NEUMANN)) ** 2 for q in grid.tree.external_nodes)
    den = norm_H1_space(u0f) ** 2 + norm_L2_space(u1f) ** 2 + g_norm ** 2
    return num / den


# ---------------------------------------------------------------------------
# observability

def eigen_velocities(g: MetricTree, modes=5):
    """a_k(s) = sin(k pi s / l_j) on every edge, k = 1..modes (zero at all nodes)."""
    ln = {e.id: e.length for e in g.edges}
    return [(lambda k: lambda e, s: np.sin(k * np.pi * np.asarray(s, dtype=float) / ln[e]))(k)
            for k in range(1, modes + 1)]


def run_observability(g: MetricTree, p=None, velocities=None, Ts=(3.0,), excluded=None,
                      target_dx=None, cfl=0.8, modes=5, seed=None) -> ExperimentReport:
    """Empirical observability constants |a|^2 / sum_Q int_0^T |d_x u(Q, t)|^2 dt.

    One run per velocity up to max(Ts); shorter horizons reuse the truncated
    traces, so the constants are monotone in T by construction.  a = 0 is
    excluded and flagged.
    """
    require_valid(g)
    with Timer() as tm:
        meas, excluded = measured_nodes(g, excluded)
        velocities = eigen_velocities(g, modes) if velocities is None else list(velocities)
        Ts = sorted(float(t) for t in Ts)
        grid = discretize(g, target_dx, cfl, Ts[-1])

        def one(item):
            i, a = item
            af = as_field(grid, a, "a")
            a2 = norm_L2_space(af) ** 2
            rows = []
            if a2 == 0:
                for T in Ts:
                    rows.append({"member": i, "T": T, "a_norm2": 0.0, "trace_energy": 0.0,
                                 "ratio": math.nan, "excluded": True})
                return rows
            sol = solve_wave(grid, p, None, af, None)
            traces = [extract_trace(sol, q, NEUMANN) for q in meas]
            for T in Ts:
                count = int(math.floor(T / grid.dt + 1e-9)) + 1
                en = sum(norm_L2_time(tr.truncate(count)) ** 2 for tr in traces)
                rows.append({"member": i, "T": T, "a_norm2": a2, "trace_energy": en,
                             "ratio": a2 / en if en > 0 else math.inf, "excluded": False})
            return rows

        records = [r for rows in pmap(one, enumerate(velocities)) for r in rows]
    params = {"excluded": excluded, "measured": " ".join(meas), "Ts": " ".join(map(str, Ts)),
              "dt": grid.dt, "cells": " ".join(f"{e}={m}" for e, m in grid.cells.items()),
              "ensemble": len(velocities)}
    return ExperimentReport("observability", params, records, AGGREGATORS["observability"](records),
                            seed, g.digest(), wall_clock=tm.elapsed)


# ---------------------------------------------------------------------------
# stability

def node_average(f: NetworkField) -> NetworkField:
    """Copy of ``f`` with every node sample replaced by the mean over incident edges.

    Changes f only on a null set, so L2 quantities are unaffected, but the
    result is an admissible (continuous) initial field.
    """
    grid = f.grid
    acc, cnt = {}, {}
    for e in grid.tree.edges:
        v = f.values[e.id]
        for n, x in ((e.start, v[0]), (e.end, v[-1])):
            acc[n] = acc.get(n, 0.0) + x
            cnt[n] = cnt.get(n, 0) + 1
    out = {}
    for e in grid.tree.edges:
        v = np.array(f.values[e.id], copy=True)
        v[0], v[-1] = acc[e.start] / cnt[e.start], acc[e.end] / cnt[e.end]
        out[e.id] = v
    return NetworkField(grid, out)


def _neumann_traces(sol, nodes):
    return {q: extract_trace(sol, q, NEUMANN) for q in nodes}


def stability_run(grid, p, q, u0, h, nodes, noise: NoiseSpec = None, split=False):
    """One (p, q) pair on one grid: the ratio |q - p|_{L2} / sum_Q |trace diff|_{H1(0,T)}.

    With ``split`` the difference y = d/dt (u[p] - u[q]) is decomposed as
    psi + phi (psi: source (q - p) d_t u[p], zero data; phi: free waves from
    d_t phi(0) = (q - p) u0) and the trace norms of both parts are recorded.
    """
    pf, qf = as_field(grid, p, "p"), as_field(grid, q, "q")
    u0f = as_field(grid, u0, "u0")
    sp_ = solve_wave(grid, pf, u0f, None, h)
    sq_ = solve_wave(grid, qf, u0f, None, h)
    tp, tq = _neumann_traces(sp_, nodes), _neumann_traces(sq_, nodes)
    if noise is not None and noise.level > 0:
        tq = {n: add_noise(tr, NoiseSpec(noise.level, noise.seed + k, noise.model))
              for k, (n, tr) in enumerate(sorted(tq.items()))}
    diff = {n: tp[n] - tq[n] for n in nodes}
    num = norm_L2_space(qf - pf)
    den = sum(norm_H1_time(d) for d in diff.values())
    den_l2 = sum(norm_L2_time(d) for d in diff.values())
    flagged = den < 1e-12
    rec = {"num": num, "den_H1": den, "den_L2": den_l2,
           "ratio": math.nan if flagged else num / den, "flagged": flagged}
    if split:
        rec.update(_psi_phi(grid, pf, qf, u0f, sp_, nodes, diff))
    return rec


def _psi_phi(grid, pf, qf, u0f, sol_p, nodes, diff):
    dq = interior_potential(grid, qf) - interior_potential(grid, pf)
    ut = np.gradient(sol_p.values, grid.dt, axis=0, edge_order=2)
    psi = solve_wave(grid, qf, None, None, None, source=dq[None, :] * ut)
    phi = solve_wave(grid, qf, None, node_average((qf - pf) * u0f), None)
    tpsi, tphi = _neumann_traces(psi, nodes), _neumann_traces(phi, nodes)
    res = num = 0.0
    for n in nodes:
        y = time_derivative(diff[n])
        res += float(np.sum((y - tpsi[n].values - tphi[n].values) ** 2))
        num += float(np.sum(y ** 2))
    return {"psi_H1": sum(norm_H1_time(t) for t in tpsi.values()),
            "phi_L2": sum(norm_L2_time(t) for t in tphi.values()),
            "split_residual": math.sqrt(res / num) if num > 0 else 0.0}


def random_pairs(g: MetricTree, n_pairs, seed=0, M=3.0, modes=3):
    """Independent Fourier-series potentials, member i seeded by (seed, i)."""
    out = []
    for i in range(n_pairs):
        rng = np.random.default_rng([seed, i])
        out.append((fourier_potential(g, rng, M, modes), fourier_potential(g, rng, M, modes)))
    return out


def run_stability(g: MetricTree, pairs=None, T=None, n_pairs=20, seed=0, M=3.0, u0=None,
                  noise: NoiseSpec = None, excluded=None, target_dx=None, cfl=0.8,
                  split=False, refine=True) -> ExperimentReport:
    """Empirical Lipschitz constants of the measurement map over an ensemble.

    Both potentials of a pair are driven by the same data: u0 (default
    1 + 0.1 smooth perturbation, r = 0.5 holds), u1 = 0, and the constant
    Dirichlet input u0(Q).  With ``refine`` every pair is rerun at half the
    spacing (level 1).
    """
    require_valid(g)
    with Timer() as tm:
        nodes, excluded = measured_nodes(g, excluded)
        T = default_horizon(g, excluded) if T is None else T
        pairs = random_pairs(g, n_pairs, seed, M) if pairs is None else list(pairs)
        u0 = perturbed_unit(g, np.random.default_rng([seed, 10 ** 6])) if u0 is None else u0
        if target_dx is None:
            target_dx = min(e.length for e in g.edges) / 20
        levels = [target_dx, target_dx / 2] if refine else [target_dx]
        grids = [discretize(g, dx, cfl, T) for dx in levels]

        def one(item):
            (i, (p, q)), lv = item
            grid = grids[lv]
            u0f = as_field(grid, u0, "u0")
            h = {n: float(_node_value(u0f, n)) for n in g.external_nodes}
            rec = {"member": i, "level": lv}
            rec.update(stability_run(grid, p, q, u0f, h, nodes, noise, split))
            return rec

        jobs = [(m, lv) for lv in range(len(grids)) for m in enumerate(pairs)]
        records = pmap(one, jobs)
    params = {"excluded": excluded, "T": T, "target_dx": target_dx, "cfl": cfl, "M": M,
              "ensemble": len(pairs), "noise_level": 0.0 if noise is None else noise.level,
              "split": split, "levels": len(grids)}
    return ExperimentReport("stability", params, records, AGGREGATORS["stability"](records),
                            seed, g.digest(), wall_clock=tm.elapsed)


def _node_value(f: NetworkField, node):
    e = f.grid.tree.incident(node)[0]
    return f.values[e.id][0] if e.start == node else f.values[e.id][-1]


# ---------------------------------------------------------------------------
# uniqueness

def travel_time(g: MetricTree, edge, nodes):
    """Shortest metric distance from ``edge`` (either endpoint) to any of ``nodes``."""
    e = g.edge(edge)
    d0, d1 = g.distances_from(e.start), g.distances_from(e.end)
    return min(min(d0[n], d1[n]) for n in nodes)


def run_uniqueness_check(g: MetricTree, p, q, excluded=None, T=None, target_dx=None, cfl=0.8,
                         u0=None, tol=1e-10, equations=("wave", "heat", "schrodinger")) -> ExperimentReport:
    """Measured-trace differences of u[p] and u[q] for the three equations.

    Wave and Schrödinger: outward Neumann traces with the constant Dirichlet
    input u0(Q); heat: Dirichlet traces under zero Neumann data.  The verdict
    is "consistent with p = q" iff every difference is <= ``tol``.
    """
    require_valid(g)
    with Timer() as tm:
        nodes, excluded = measured_nodes(g, excluded)
        T = default_horizon(g, excluded) if T is None else T
        grid = discretize(g, target_dx, cfl, T)
        u0f = as_field(grid, 1.0 if u0 is None else u0, "u0")
        pf, qf = as_field(grid, p, "p"), as_field(grid, q, "q")
        h = {n: float(_node_value(u0f, n)) for n in g.external_nodes}

        def traces(eq, pot):
            if eq == "wave":
                return _neumann_traces(solve_wave(grid, pot, u0f, None, h), nodes)
            if eq == "schrodinger":
                return _neumann_traces(solve_schrodinger(grid, pot, u0f, h), nodes)
            sol = solve_heat(grid, pot, u0f)
            return {n: extract_trace(sol, n, DIRICHLET) for n in nodes}

        records = []
        for eq in equations:
            a, b = traces(eq, pf), traces(eq, qf)
            for n in nodes:
                d = a[n] - b[n]
                records.append({"equation": eq, "node": n, "max_diff": float(np.max(np.abs(d.values))),
                                "L2_diff": norm_L2_time(d), "tol": tol})
    params = {"excluded": excluded, "T": T, "dt": grid.dt, "p_minus_q_L2": norm_L2_space(pf - qf)}
    return ExperimentReport("uniqueness", params, records, AGGREGATORS["uniqueness"](records),
                            None, g.digest(), wall_clock=tm.elapsed)


# ---------------------------------------------------------------------------
# synthetic peeling benchmark

def peel_case(g: MetricTree, excluded, seed=0, M=3.0, T=None, data_dx=None, cfl=0.5):
    """Node-continuous random truth, u0 = 1, compatible inputs; returns
    ``(Measurements, truth samples per edge, T)`` with data from a grid twice
    as fine as the default inversion grid of the shortest edge."""
    from .peeling import synthesize_measurements
    p = node_continuous_potential(g, np.random.default_rng(seed), M)
    T = default_horizon(g, excluded) if T is None else T
    h = compatible_dirichlet(g, p, 1.0)
    data_dx = min(e.length for e in g.edges) / 80 if data_dx is None else data_dx
    meas, _ = synthesize_measurements(g, p, 1.0, None, h, T, excluded, data_dx, cfl)
    truth = {e.id: p(e.id, np.linspace(0, e.length, 401)) for e in g.edges}
    return meas, truth, T
