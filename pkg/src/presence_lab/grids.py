"""Lattice fields and window test functions for the presence recursions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .reporting import fmt_real


@dataclass
class TestFunction:
    """Compactly supported [0,1]-valued window function.

    Either the indicator of [alpha, beta] or a step function given by cell
    values anchored at ``alpha`` with spacing ``cell_delta``.
    """

    __test__ = False  # not a pytest class, despite the name

    alpha: float
    beta: float
    cell_vals: np.ndarray | None = None
    cell_delta: float | None = None

    @classmethod
    def indicator(cls, alpha: float, beta: float) -> "TestFunction":
        if not alpha < beta:
            raise ValueError("need alpha < beta")
        return cls(float(alpha), float(beta))

    @classmethod
    def step(cls, alpha: float, cell_delta: float, values) -> "TestFunction":
        values = np.asarray(values, dtype=float)
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("step values must lie in [0, 1]")
        beta = alpha + cell_delta * len(values)
        return cls(float(alpha), float(beta), values, float(cell_delta))

    def shifted(self, c: float) -> "TestFunction":
        """tau_c f = f(c + .): support moves to [alpha-c, beta-c]."""
        return TestFunction(self.alpha - c, self.beta - c, self.cell_vals, self.cell_delta)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.cell_vals is None:
            return ((x >= self.alpha) & (x <= self.beta)).astype(float)
        idx = np.floor((x - self.alpha) / self.cell_delta).astype(np.int64)
        ok = (idx >= 0) & (idx < len(self.cell_vals))
        return np.where(ok, self.cell_vals[np.clip(idx, 0, len(self.cell_vals) - 1)], 0.0)

    def cell_average(self, origin: float, delta: float, m: int) -> np.ndarray:
        """Averages over grid cells [x_i - delta/2, x_i + delta/2]."""
        xs = origin + delta * np.arange(m)
        if self.cell_vals is None:
            lo = np.maximum(xs - delta / 2, self.alpha)
            hi = np.minimum(xs + delta / 2, self.beta)
            return np.clip((hi - lo) / delta, 0.0, 1.0)
        # resample the step function by sub-cell quadrature
        sub = 8
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        vals = self(xs[:, None] + delta * offs[None, :])
        return vals.mean(axis=1)

    def integral(self) -> float:
        if self.cell_vals is None:
            return self.beta - self.alpha
        return float(self.cell_vals.sum() * self.cell_delta)

    def weighted_integral(self, theta: float) -> float:
        """int e^{-theta y} f(y) dy, exact per cell."""
        if self.cell_vals is None:
            if theta == 0.0:
                return self.beta - self.alpha
            return (math.exp(-theta * self.alpha) - math.exp(-theta * self.beta)) / theta
        edges = self.alpha + self.cell_delta * np.arange(len(self.cell_vals) + 1)
        if theta == 0.0:
            return float(self.cell_vals.sum() * self.cell_delta)
        pieces = (np.exp(-theta * edges[:-1]) - np.exp(-theta * edges[1:])) / theta
        return float(np.dot(self.cell_vals, pieces))


@dataclass
class GridField:
    """Function sampled on a uniform lattice; zero outside the window."""

    origin: float
    delta: float
    values: np.ndarray
    mass_loss: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def x(self) -> np.ndarray:
        return self.origin + self.delta * np.arange(len(self.values))

    @property
    def hi(self) -> float:
        return self.origin + self.delta * (len(self.values) - 1)

    def value_at(self, xq, count_miss: bool = False):
        """Linear interpolation; zero outside the window."""
        xq = np.asarray(xq, dtype=float)
        pos = (xq - self.origin) / self.delta
        k = np.floor(pos).astype(np.int64)
        w = pos - k
        m = len(self.values)
        v0 = np.where((k >= 0) & (k < m), self.values[np.clip(k, 0, m - 1)], 0.0)
        v1 = np.where((k + 1 >= 0) & (k + 1 < m), self.values[np.clip(k + 1, 0, m - 1)], 0.0)
        out = (1.0 - w) * v0 + w * v1
        if count_miss:
            return out, int(np.sum((pos < 0.0) | (pos > m - 1)))
        return out

    def integral(self) -> float:
        return float(self.values.sum() * self.delta)

    def to_csv(self, path) -> None:
        xs = self.x()
        with open(path, "w", newline="\n") as fh:
            fh.write("x,value\n")
            for x, v in zip(xs, self.values):
                fh.write(f"{fmt_real(x)},{fmt_real(v)}\n")


def shifted_array(arr: np.ndarray, k: int) -> np.ndarray:
    """out[i] = arr[i + k], zero-padded."""
    m = len(arr)
    out = np.zeros_like(arr)
    if k >= 0:
        if k < m:
            out[:m - k] = arr[k:]
    else:
        if -k < m:
            out[-k:] = arr[:m + k]
    return out


def read_shifted(arr: np.ndarray, z_over_delta: float) -> np.ndarray:
    """out[i] = linear interpolation of arr at index i + z/delta."""
    k = math.floor(z_over_delta)
    w = z_over_delta - k
    if w == 0.0:
        return shifted_array(arr, k)
    return (1.0 - w) * shifted_array(arr, k) + w * shifted_array(arr, k + 1)
