"""Estimator reports and deterministic serialization helpers."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class EstimatorReport:
    """Uniform return type of every Monte Carlo operation."""

    estimate: float
    stderr: float
    n: int
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        diag = {k: _jsonable(v) for k, v in sorted(self.diagnostics.items())}
        return {
            "estimate": float(self.estimate),
            "stderr": float(self.stderr),
            "n": int(self.n),
            "seed": int(self.seed),
            "diagnostics": diag,
        }

    def within(self, target: float, k_sigma: float = 3.0) -> bool:
        return abs(self.estimate - target) <= k_sigma * self.stderr


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    return v


def combine_moments(blocks) -> tuple[int, float, float]:
    """Fold per-block (n, sum, sumsq) triples in block order."""
    n_tot, s1, s2 = 0, 0.0, 0.0
    for n, s, sq in blocks:
        n_tot += int(n)
        s1 += float(s)
        s2 += float(sq)
    return n_tot, s1, s2


def report_from_moments(blocks, seed: int, diagnostics: dict | None = None) -> EstimatorReport:
    n, s1, s2 = combine_moments(blocks)
    if n == 0:
        raise ValueError("no replicates")
    mean = s1 / n
    var = max(s2 - n * mean * mean, 0.0) / max(n - 1, 1)
    se = math.sqrt(var / n)
    return EstimatorReport(mean, se, n, int(seed), dict(diagnostics or {}))


def fmt_real(x: float) -> str:
    """17 significant digits; fixed formatting for byte-stable CSV."""
    return format(float(x), ".17g")


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_real(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def dump_json(obj, path=None) -> str:
    """Canonical JSON: sorted keys, fixed separators, repr floats."""
    def default(v):
        if isinstance(v, (np.floating, np.integer, np.bool_)):
            return v.item()
        if isinstance(v, np.ndarray):
            return v.tolist()
        raise TypeError(f"not JSON serializable: {type(v)}")

    text = json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False, default=default)
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text + "\n")
    return text
