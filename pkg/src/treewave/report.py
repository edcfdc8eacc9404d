"""Structured plain-text reports: a key-value header followed by CSV blocks.

Floats are written with 17 significant digits so a report can be parsed back
and compared bit-for-bit.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .traces import format_float

VERSION = "0.1.0"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    if v is None:
        return ""
    return str(v)


def _parse(s):
    if s == "":
        return None
    if s in ("True", "False"):
        return s == "True"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def csv_block(rows, columns=None):
    """CSV text for a list of dicts (columns default to the first row's keys)."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def parse_csv_block(text):
    rd = csv.reader(io.StringIO(text))
    rows = list(rd)
    if not rows:
        return []
    head = rows[0]
    return [{k: _parse(v) for k, v in zip(head, r)} for r in rows[1:] if r]


@dataclass
class ExperimentReport:
    kind: str
    params: dict
    records: list                        # one dict per run
    aggregates: dict
    seed: int = None
    graph_hash: str = ""
    version: str = VERSION
    wall_clock: float = 0.0

    def header(self):
        head = {"experiment": self.kind, "version": self.version, "seed": self.seed,
                "graph-hash": self.graph_hash, "wall-clock": self.wall_clock}
        head.update({f"param.{k}": v for k, v in self.params.items()})
        return head

    def to_text(self):
        lines = [f"{k}: {_fmt(v)}" for k, v in self.header().items()]
        out = "\n".join(lines) + "\n\n[records]\n" + csv_block(self.records)
        agg = [{"key": k, "value": v} for k, v in self.aggregates.items()]
        out += "\n[aggregates]\n" + csv_block(agg, ["key", "value"])
        return out

    def write(self, out_dir, name=None):
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name or f"{self.kind}_report.txt")
        with open(path, "w") as fh:
            fh.write(self.to_text())
        with open(os.path.join(out_dir, f"{self.kind}_records.csv"), "w") as fh:
            fh.write(csv_block(self.records))
        return path

    def recompute(self):
        """Aggregates rebuilt from the stored records."""
        return AGGREGATORS[self.kind](self.records)


def parse_report(text) -> ExperimentReport:
    head, _, rest = text.partition("\n\n[records]\n")
    meta = {}
    for line in head.splitlines():
        k, _, v = line.partition(": ")
        meta[k] = _parse(v)
    rec_text, _, agg_text = rest.partition("\n[aggregates]\n")
    records = parse_csv_block(rec_text)
    aggregates = {r["key"]: r["value"] for r in parse_csv_block(agg_text)}
    params = {k[len("param."):]: v for k, v in meta.items() if k.startswith("param.")}
    return ExperimentReport(meta["experiment"], params, records, aggregates, meta.get("seed"),
                            meta.get("graph-hash") or "", str(meta.get("version")),
                            meta.get("wall-clock") or 0.0)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# ---------------------------------------------------------------------------
# aggregate rules, one per experiment kind

def _finite(vals):
    return [v for v in vals if v is not None and math.isfinite(v)]


def _agg_observability(records):
    out = {}
    for T in sorted({r["T"] for r in records}):
        ratios = _finite(r["ratio"] for r in records if r["T"] == T and not r["excluded"])
        out[f"max_ratio@T={format_float(T)}"] = max(ratios) if ratios else math.nan
        out[f"min_ratio@T={format_float(T)}"] = min(ratios) if ratios else math.nan
    out["n_excluded"] = sum(1 for r in records if r["excluded"]) // max(1, len({r["T"] for r in records}))
    return out


def _agg_stability(records):
    out = {}
    levels = sorted({r["level"] for r in records})
    for lv in levels:
        ratios = _finite(r["ratio"] for r in records if r["level"] == lv and not r["flagged"])
        out[f"max_ratio@level={lv}"] = max(ratios) if ratios else math.nan
        out[f"min_ratio@level={lv}"] = min(ratios) if ratios else math.nan
    out["n_flagged"] = sum(1 for r in records if r["flagged"])
    if len(levels) > 1:
        a, b = out[f"max_ratio@level={levels[0]}"], out[f"max_ratio@level={levels[-1]}"]
        out["refinement_change"] = abs(b - a) / abs(a) if a else math.nan
    return out


def _agg_uniqueness(records):
    diffs = [r["max_diff"] for r in records]
    out = {f"max_diff.{eq}": max([r["max_diff"] for r in records if r["equation"] == eq] or [0.0])
           for eq in sorted({r["equation"] for r in records})}
    out["max_diff"] = max(diffs) if diffs else 0.0
    out["consistent_with_p_eq_q"] = all(r["max_diff"] <= r["tol"] for r in records)
    return out


AGGREGATORS = {
    "observability": _agg_observability,
    "stability": _agg_stability,
    "uniqueness": _agg_uniqueness,
}
