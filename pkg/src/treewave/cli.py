"""Command-line front end: ``treewave <subcommand> [flags]``.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .edge_inverse import InverseConfig
from .errors import NumericalError, ValidationError
from .experiments import (compatible_dirichlet, run_observability, run_stability,
                          run_uniqueness_check)
from .fields import NetworkField, as_field, discretize
from .graph import read_network, serialize_network
from .implicit import solve_heat, solve_schrodinger
from .diagnostics import energy_series, extract_trace, max_kirchhoff_residual
from .peeling import (read_measurements, measurements_from_solution, peel_tree, residual_certificate,
                      write_measurements)
from .report import csv_block
from .traces import (DIRICHLET, NEUMANN, NoiseSpec, add_noise, format_float,
                     read_traces_csv, reznitzkaya, trace_name, write_traces_csv)
from .wave import solve_wave


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# shared flag groups

def _grid_flags(sp, T=True):
    sp.add_argument("--network", required=True, help="network file (node/edge/potential lines)")
    if T:
        sp.add_argument("--T", type=float, required=True, help="time horizon")
    sp.add_argument("--target-dx", type=float, default=None,
                    help="spatial step target (default: shortest edge / 40)")
    sp.add_argument("--cfl", type=float, default=0.8, help="dt / min dx (default 0.8)")
    sp.add_argument("--out", default=None, help="output directory for report and CSVs")


def _initial_flags(sp):
    sp.add_argument("--u0", type=float, default=1.0, help="constant part of u0 (default 1)")
    sp.add_argument("--u0-amp", type=float, default=0.0,
                    help="adds AMP*sin(pi s/l) on every edge to u0 (default 0)")
    sp.add_argument("--u1", type=float, default=0.0, help="constant initial velocity (default 0)")


def _inverse_flags(sp):
    sp.add_argument("--alpha", type=float, default=None,
                    help="Tikhonov weight (default 1e-3 * data RMS^2)")
    sp.add_argument("--gamma", type=float, default=0.0, help="H1 smoothing weight (default 0)")
    sp.add_argument("--max-iters", type=int, default=30, help="Gauss-Newton iterations (default 30)")
    sp.add_argument("--grad-tol", type=float, default=1e-9, help="gradient tolerance (default 1e-9)")
    sp.add_argument("--bound-M", type=float, default=math.inf, help="admissible bound |p| <= M")
    sp.add_argument("--cells", type=int, default=40, help="inversion cells per edge (default 40)")


def _noise_flags(sp):
    sp.add_argument("--noise-level", type=float, default=0.0,
                    help="additive Gaussian noise, fraction of trace RMS (default 0)")
    sp.add_argument("--seed", type=int, default=0, help="noise / ensemble seed (default 0)")


def build_parser():
    ap = _Parser(prog="treewave", description="Wave, heat and Schrodinger equations on metric "
                 "trees; potential recovery by leaf peeling; estimate experiments.")
    sub = ap.add_subparsers(dest="cmd", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    sp = sub.add_parser("forward", help="wave solve; writes traces.csv, initial.txt, energy.csv, report")
    _grid_flags(sp)
    _initial_flags(sp)
    sp.add_argument("--boundary", choices=["compatible", "hold", "zero"], default="compatible",
                    help="Dirichlet input at external nodes: compatible (matches u_tt at t=0), "
                         "hold (u0 value), zero")
    _noise_flags(sp)

    sp = sub.add_parser("heat", help="heat solve with zero Neumann data; writes traces and report")
    _grid_flags(sp)
    _initial_flags(sp)
    sp.add_argument("--dt", type=float, default=None, help="time step (default cfl * min dx)")

    sp = sub.add_parser("schrodinger", help="Crank-Nicolson Schrodinger solve; writes traces and report")
    _grid_flags(sp)
    _initial_flags(sp)
    sp.add_argument("--dt", type=float, default=None, help="time step (default cfl * min dx)")
    sp.add_argument("--boundary", choices=["hold", "zero"], default="hold",
                    help="Dirichlet input: hold the u0 value, or zero")

    sp = sub.add_parser("peel", help="recover the potential from a measurement directory")
    sp.add_argument("--network", required=True, help="network file; potential lines, if any, "
                    "are used as the truth for error columns")
    sp.add_argument("--measurements", required=True, help="directory with traces.csv and initial.txt")
    sp.add_argument("--excluded", required=True, help="the unmeasured external node")
    sp.add_argument("--consistency-tol", type=float, default=None,
                    help="reject node transfers whose Dirichlet estimates differ by more")
    sp.add_argument("--certificate", action="store_true", help="also run the residual certificate")
    sp.add_argument("--out", default=None, help="output directory")
    _inverse_flags(sp)

    sp = sub.add_parser("observability", help="empirical observability constants")
    _grid_flags(sp, T=False)
    sp.add_argument("--T", type=float, nargs="+", required=True, help="one or more horizons")
    sp.add_argument("--modes", type=int, default=5, help="eigenmode-like velocities 1..K (default 5)")
    sp.add_argument("--excluded", default=None, help="unmeasured external node (default: last)")

    sp = sub.add_parser("stability", help="Lipschitz-ratio ensemble")
    _grid_flags(sp, T=False)
    sp.add_argument("--T", type=float, default=None, help="horizon (default 5 x depth)")
    sp.add_argument("--pairs", type=int, default=20, help="ensemble size (default 20)")
    sp.add_argument("--bound-M", type=float, default=3.0, help="potential bound (default 3)")
    sp.add_argument("--excluded", default=None, help="unmeasured external node (default: last)")
    sp.add_argument("--split", action="store_true", help="record the psi/phi decomposition")
    sp.add_argument("--no-refine", action="store_true", help="skip the refined rerun")
    _noise_flags(sp)

    sp = sub.add_parser("uniqueness", help="trace differences of u[p] and u[q]")
    _grid_flags(sp)
    sp.add_argument("--q-network", default=None, help="network file whose potential lines give q")
    sp.add_argument("--perturb-edge", default=None, help="q = p + delta sin^2(pi s/l) on this edge")
    sp.add_argument("--delta", type=float, default=0.5, help="perturbation size (default 0.5)")
    sp.add_argument("--excluded", default=None, help="unmeasured external node (default: last)")
    sp.add_argument("--tol", type=float, default=1e-10, help="verdict tolerance (default 1e-10)")

    sp = sub.add_parser("transform", help="wave-to-heat transform of a trace CSV column")
    sp.add_argument("--traces", required=True, help="CSV written by this tool")
    sp.add_argument("--column", default=None, help="column name (default: first)")
    sp.add_argument("--t-start", type=float, default=0.1, help="first heat time (default 0.1)")
    sp.add_argument("--t-end", type=float, default=1.0, help="last heat time (default 1)")
    sp.add_argument("--count", type=int, default=91, help="number of heat times (default 91)")
    sp.add_argument("--out", default=None, help="output directory")
    return ap


# ---------------------------------------------------------------------------
# helpers

def _u0(g, args):
    ln = {e.id: e.length for e in g.edges}
    c, amp = args.u0, args.u0_amp
    return lambda e, s: c + amp * np.sin(np.pi * np.asarray(s, dtype=float) / ln[e])


def _potential(grid):
    return NetworkField.from_tree_potentials(grid)


def _potential_fn(g):
    """Piecewise-linear callable from the network's potential lines (0 where absent)."""
    pots = g.potentials
    ln = {e.id: e.length for e in g.edges}

    def p(e, s):
        s = np.asarray(s, dtype=float)
        if e not in pots:
            return np.zeros_like(s)
        v = np.asarray(pots[e])
        return np.interp(s, np.linspace(0, ln[e], v.size), v)
    return p


def _emit(args, name, text):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _kv(d):
    return "".join(f"{k}: {v if isinstance(v, str) else format_float(v) if isinstance(v, float) else v}\n"
                   for k, v in d.items())


def _grid(g, args):
    grid = discretize(g, args.target_dx, args.cfl, args.T)
    if getattr(args, "dt", None):
        grid = grid.with_time(dt=args.dt)
    return grid


# ---------------------------------------------------------------------------
# subcommands

def cmd_forward(args):
    g = read_network(args.network)
    grid = _grid(g, args)
    p = _potential(grid)
    u0 = _u0(g, args)
    u0f = as_field(grid, u0, "u0")
    u1f = as_field(grid, args.u1, "u1")
    if args.boundary == "compatible":
        h = compatible_dirichlet(g, _potential_fn(g), u0)
    elif args.boundary == "hold":
        h = {q: float(u0f.values[g.incident(q)[0].id][0 if g.incident(q)[0].start == q else -1])
             for q in g.external_nodes}
    else:
        h = None
    sol = solve_wave(grid, p, u0f, u1f, h)
    meas = measurements_from_solution(sol, None, u1f)
    if args.noise_level > 0:
        meas.neumann = {q: add_noise(tr, NoiseSpec(args.noise_level, args.seed + k))
                        for k, (q, tr) in enumerate(sorted(meas.neumann.items()))}
    E = energy_series(sol)
    info = {"command": "forward", "graph-hash": g.digest(), "T": grid.T, "dt": grid.dt, "nt": grid.nt,
            "cfl": grid.cfl, "boundary": args.boundary, "noise-level": args.noise_level,
            "seed": args.seed, "energy-first": float(E[0]) if E.size else 0.0,
            "energy-last": float(E[-1]) if E.size else 0.0,
            "max-kirchhoff-residual": float(max_kirchhoff_residual(sol)),
            "continuity-residual": float(sol.continuity_residual())}
    if args.out:
        write_measurements(meas, args.out)
        with open(os.path.join(args.out, "energy.csv"), "w") as fh:
            fh.write(csv_block([{"t": t, "energy": e} for t, e in zip(grid.times[1:-1], E)]))
    _emit(args, "report.txt", _kv(info))
    return 0


def cmd_heat(args):
    g = read_network(args.network)
    grid = _grid(g, args)
    u0f = as_field(grid, _u0(g, args), "u0")
    sol = solve_heat(grid, _potential(grid), u0f)
    recs = [extract_trace(sol, q, DIRICHLET) for q in g.external_nodes]
    w = grid.trapezoid_weights()
    mass = sol.values @ w
    info = {"command": "heat", "graph-hash": g.digest(), "T": grid.T, "dt": grid.dt, "nt": grid.nt,
            "heat-first": float(mass[0]), "heat-last": float(mass[-1])}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_traces_csv(os.path.join(args.out, "traces.csv"), recs)
        with open(os.path.join(args.out, "heat.csv"), "w") as fh:
            fh.write(csv_block([{"t": t, "total_heat": m} for t, m in zip(grid.times, mass)]))
    _emit(args, "report.txt", _kv(info))
    return 0


def cmd_schrodinger(args):
    g = read_network(args.network)
    grid = _grid(g, args)
    u0f = as_field(grid, _u0(g, args), "u0")
    h = None
    if args.boundary == "hold":
        h = {q: float(u0f.values[g.incident(q)[0].id][0 if g.incident(q)[0].start == q else -1])
             for q in g.external_nodes}
    sol = solve_schrodinger(grid, _potential(grid), u0f, h)
    recs = [extract_trace(sol, q, NEUMANN) for q in g.external_nodes]
    w = grid.trapezoid_weights()
    norm = np.sqrt((np.abs(sol.values) ** 2) @ w)
    info = {"command": "schrodinger", "graph-hash": g.digest(), "T": grid.T, "dt": grid.dt,
            "nt": grid.nt, "boundary": args.boundary, "norm-first": float(norm[0]),
            "norm-last": float(norm[-1]),
            "max-norm-drift": float(np.max(np.abs(norm - norm[0])) / norm[0]) if norm[0] else 0.0}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_traces_csv(os.path.join(args.out, "traces.csv"), recs)
        with open(os.path.join(args.out, "norm.csv"), "w") as fh:
            fh.write(csv_block([{"t": t, "L2_norm": n} for t, n in zip(grid.times, norm)]))
    _emit(args, "report.txt", _kv(info))
    return 0


def cmd_peel(args):
    g = read_network(args.network)
    meas = read_measurements(g, args.measurements)
    cfg = InverseConfig(alpha=args.alpha, gamma=args.gamma, max_iters=args.max_iters,
                        grad_tol=args.grad_tol, cells_per_edge=args.cells)
    truth = {e: np.asarray(v) for e, v in g.potentials.items()} if g.potentials else None
    if truth is not None and set(truth) != set(g.edge_ids):
        truth = None
    p_hat, rep = peel_tree(g.with_potentials({}), meas, args.excluded, cfg, truth=truth,
                           M=args.bound_M, consistency_tol=args.consistency_tol)
    lines = rep.lines()
    if args.certificate:
        cert = residual_certificate(g, p_hat, meas)
        lines += ["certificate:"] + ["  " + ln for ln in cert.lines()]
    out_tree = g.with_potentials({e: tuple(p_hat.values[e]) for e in g.edge_ids})
    diag = [{"edge": e, "iter": it, "J": J, "grad_norm": gn, "step": st}
            for e in sorted(rep.edges) for it, J, gn, st in rep.edges[e].history]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "potential.net"), "w") as fh:
            fh.write(serialize_network(out_tree))
        with open(os.path.join(args.out, "diagnostics.csv"), "w") as fh:
            fh.write(csv_block(diag, ["edge", "iter", "J", "grad_norm", "step"]))
        _emit(args, "peel_report.txt", "\n".join(lines) + "\n")
    else:
        sys.stdout.write(serialize_network(out_tree))
        sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _report_out(args, rep):
    if args.out:
        rep.write(args.out)
    else:
        sys.stdout.write(rep.to_text())


def cmd_observability(args):
    g = read_network(args.network)
    rep = run_observability(g, _potential_fn(g), Ts=args.T, excluded=args.excluded,
                            target_dx=args.target_dx, cfl=args.cfl, modes=args.modes)
    _report_out(args, rep)
    return 0


def cmd_stability(args):
    g = read_network(args.network)
    noise = NoiseSpec(args.noise_level, args.seed) if args.noise_level > 0 else None
    rep = run_stability(g, T=args.T, n_pairs=args.pairs, seed=args.seed, M=args.bound_M,
                        noise=noise, excluded=args.excluded, target_dx=args.target_dx, cfl=args.cfl,
                        split=args.split, refine=not args.no_refine)
    _report_out(args, rep)
    return 0


def cmd_uniqueness(args):
    g = read_network(args.network)
    p = _potential_fn(g)
    if args.q_network:
        gq = read_network(args.q_network)
        if gq.edge_ids != g.edge_ids:
            raise ValidationError("--q-network must describe the same tree")
        q = _potential_fn(gq)
    elif args.perturb_edge:
        if args.perturb_edge not in g.edge_ids:
            raise ValidationError(f"unknown edge {args.perturb_edge!r}")
        ln = g.edge(args.perturb_edge).length
        q = lambda e, s: p(e, s) + (args.delta * np.sin(np.pi * np.asarray(s) / ln) ** 2
                                    if e == args.perturb_edge else 0.0)
    else:
        q = p
    rep = run_uniqueness_check(g, p, q, args.excluded, args.T, args.target_dx, args.cfl, tol=args.tol)
    _report_out(args, rep)
    return 0


def cmd_transform(args):
    recs = read_traces_csv(args.traces)
    if args.column is None:
        w = recs[0]
    else:
        named = {trace_name(r): r for r in recs}
        named.update({r.node: r for r in recs if r.node not in named})
        if args.column not in named:
            raise ValidationError(f"no column {args.column!r} in {args.traces}")
        w = named[args.column]
    if w.t0 != 0:
        raise ValidationError("wave trace must start at tau = 0")
    t = np.linspace(args.t_start, args.t_end, args.count)
    u = reznitzkaya(w, t)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_traces_csv(os.path.join(args.out, "heat_trace.csv"), [u])
    else:
        sys.stdout.write("t,value\n" + "".join(f"{format_float(a)},{format_float(b)}\n"
                                               for a, b in zip(u.times, u.values)))
    return 0


COMMANDS = {"forward": cmd_forward, "heat": cmd_heat, "schrodinger": cmd_schrodinger,
            "peel": cmd_peel, "observability": cmd_observability, "stability": cmd_stability,
            "uniqueness": cmd_uniqueness, "transform": cmd_transform}


def cli_main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except SystemExit as exc:          # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.cmd](args)
    except (ValidationError, OSError) as exc:
        sys.stderr.write(f"treewave {args.cmd}: error: {exc}\n")
        return 1
    except NumericalError as exc:
        sys.stderr.write(f"treewave {args.cmd}: numerical failure: {exc}\n")
        return 2


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
