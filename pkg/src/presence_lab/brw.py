"""Branching-random-walk engine: exact grid recursions and tilted estimators.

Conventions.  The population starts with one individual at the origin; each
individual begets children displaced by an independent copy of the offspring
process.  For a window function f,

* ``v_n[f](x) = E sum_i f(x + z^n_i)`` -- expected windowed count, the n-fold
  convolution of f with the intensity;
* ``u_n[f](x) = 1 - E prod_i (1 - f(x + z^n_i))`` -- presence probability.

At tilt theta with drift ``a = Lambda'(theta)`` the deep-window values
``e^{n Lambda*(a)} v_n[f](-na + c)`` are expressed over a centered auxiliary
walk S_n as ``e^{-theta S_n} f(S_n + c)`` averages; the presence probability
carries an extra product of sibling-survival factors

``H_r[f](y, s) = E^{!y} int_0^1 exp< Z, log(1 - beta u_{r-1}[f](s + .)) > dbeta``

evaluated along the walk (one factor per generation back from the window).
"""
from __future__ import annotations

import math

import numpy as np

from . import rngstreams
from ._kernels import emp_u_step
from .analytic import Spectrum
from .errors import (CapExceeded, GridMiss, NotSubcritical, UnsupportedModel,
                     UnsupportedPalm, WindowOverflow)
from .grids import GridField, TestFunction, read_shifted
from .offspring import EmpiricalModel, OffspringModel
from .reporting import EstimatorReport, report_from_moments

GRID_CELLS_DEFAULT = 50      # delta = (beta - alpha) / 50
KERNEL_TAIL = 1e-9           # intensity tail probability truncated per step
MISS_RATE_LIMIT = 1e-3
MAX_CELLS_DEFAULT = 4_000_000


# ---------------------------------------------------------------------------
# grid planning


def default_delta(f: TestFunction) -> float:
    return (f.beta - f.alpha) / GRID_CELLS_DEFAULT


def _lattice_kernel(model: OffspringModel, delta: float):
    """Intensity kernel on lattice multiples of delta.

    Returns (k_lo, weights, trunc_mass, z_lo, z_hi).  Atom positions are
    split between the two neighbouring cells (exact when aligned); densities
    are sampled by midpoint quadrature at the grid resolution.
    """
    atoms = model.intensity_atoms()
    if atoms is not None:
        zs = np.array([z for z, _ in atoms], dtype=float)
        ws = np.array([w for _, w in atoms], dtype=float)
    elif isinstance(model, EmpiricalModel):
        zs = model.flat
        ws = np.full(len(zs), 1.0 / model.n_configs)
    else:
        z_lo, z_hi = model.kernel_range(KERNEL_TAIL)
        k0 = math.floor(z_lo / delta) - 1
        k1 = math.ceil(z_hi / delta) + 1
        ks = np.arange(k0, k1 + 1)
        dens = model.intensity_density(ks * delta)
        w = dens * delta
        trunc = max(model.mean_offspring() - float(w.sum()), 0.0)
        return k0, w, trunc, k0 * delta, k1 * delta

    pos = zs / delta
    k = np.floor(pos).astype(np.int64)
    frac = pos - k
    k0 = int(k.min())
    k1 = int(k.max()) + 1
    w = np.zeros(k1 - k0 + 1)
    np.add.at(w, k - k0, ws * (1.0 - frac))
    np.add.at(w, k - k0 + 1, ws * frac)
    return k0, w, 0.0, float(zs.min()), float(zs.max())


def _plan_window(model, f: TestFunction, n: int, delta: float, targets):
    targets = np.atleast_1d(np.asarray(targets, dtype=float)) if len(np.atleast_1d(targets)) else np.empty(0)
    pad = 2 * delta
    if getattr(model, "displacements_nonpositive", False):
        # reads only go leftward and the field vanishes left of the window base
        lo = f.alpha - pad
        hi = max(f.beta, targets.max() if len(targets) else f.beta) + pad
    else:
        z_lo, z_hi = model.kernel_range(KERNEL_TAIL)
        lo = f.alpha - n * max(z_hi, 0.0) - pad
        hi = f.beta - n * min(z_lo, 0.0) + pad
        if len(targets):
            lo = min(lo, targets.min() - pad)
            hi = max(hi, targets.max() + pad)
    # anchor the lattice so that f.alpha sits on a cell edge (nodes are centers)
    first = f.alpha + delta / 2.0
    m_lo = math.ceil((first - lo) / delta)
    origin = first - m_lo * delta
    m = int(math.ceil((hi - origin) / delta)) + 1
    return origin, m


def _conv_step(vals: np.ndarray, k0: int, w: np.ndarray) -> np.ndarray:
    """out[i] = sum_k w[k - k0] vals[i + k] with zero padding."""
    r = len(w)
    full = np.convolve(vals, w[::-1])
    start = k0 + r - 1
    out = np.zeros_like(vals)
    m = len(vals)
    src_lo = max(start, 0)
    src_hi = min(start + m, len(full))
    if src_hi > src_lo:
        out[src_lo - start:src_hi - start] = full[src_lo:src_hi]
    return out


# ---------------------------------------------------------------------------
# exact recursions


def v_grid(model: OffspringModel, f: TestFunction, n: int, delta: float | None = None,
           targets=(), keep_history: bool = False, max_cells: int = MAX_CELLS_DEFAULT):
    """Expected windowed count v_n[f] by n-fold lattice convolution."""
    if n < 0:
        raise ValueError("n must be >= 0")
    delta = delta or default_delta(f)
    origin, m = _plan_window(model, f, n, delta, targets)
    if m > max_cells:
        raise WindowOverflow(f"support needs {m} cells > budget {max_cells}")
    vals = f.cell_average(origin, delta, m)
    k0, w, trunc, _, _ = _lattice_kernel(model, delta)
    loss = 0.0
    history = [GridField(origin, delta, vals.copy())]
    for _ in range(n):
        vals = _conv_step(vals, k0, w)
        loss += trunc
        if keep_history:
            history.append(GridField(origin, delta, vals.copy(), mass_loss=loss))
    if keep_history:
        return history
    return GridField(origin, delta, vals, mass_loss=loss)


def _u_step(model: OffspringModel, vals: np.ndarray, delta: float,
            mu_k0: int | None, mu_w: np.ndarray | None, emp_pairs) -> np.ndarray:
    st = model.survival_transform(np.array([0.5]))
    if st is not None and mu_w is not None:
        s = np.clip(_conv_step(vals, mu_k0, mu_w), 0.0, 1.0)
        return np.clip(np.asarray(model.survival_transform(s), dtype=float), 0.0, 1.0)
    mix = model.config_mixture()
    if mix is not None:
        acc = np.zeros_like(vals)
        for p, atoms in mix:
            prod = np.ones_like(vals)
            for z in atoms:
                prod *= 1.0 - np.clip(read_shifted(vals, z / delta), 0.0, 1.0)
            acc += p * prod
        return np.clip(1.0 - acc, 0.0, 1.0)
    if emp_pairs is not None:
        fidx, frac, cfg_start = emp_pairs
        out = np.empty_like(vals)
        emp_u_step(vals, fidx, frac, cfg_start, out)
        return np.clip(out, 0.0, 1.0)
    raise UnsupportedModel(
        f"no exact product-expectation strategy for model kind {model.kind!r}")


def u_grid(model: OffspringModel, f: TestFunction, n: int, delta: float | None = None,
           targets=(), keep_history: bool = False, max_cells: int = MAX_CELLS_DEFAULT):
    """Presence probability u_n[f] on the lattice.

    Strategy by model kind: multiplicity-transform composition for
    i.i.d.-displacement models, exact enumeration for finite atom mixtures,
    ensemble averaging for empirical models.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    delta = delta or default_delta(f)
    origin, m = _plan_window(model, f, n, delta, targets)
    if m > max_cells:
        raise WindowOverflow(f"support needs {m} cells > budget {max_cells}")
    vals = np.clip(f.cell_average(origin, delta, m), 0.0, 1.0)

    mu_k0 = mu_w = None
    if model.survival_transform(np.array([0.5])) is not None:
        k0, w, _trunc, _, _ = _lattice_kernel(model, delta)
        mu_k0, mu_w = k0, w / w.sum()
    emp_pairs = None
    if isinstance(model, EmpiricalModel):
        flat, offsets = model.pair_arrays()
        pos = flat / delta
        fidx = np.floor(pos).astype(np.int64)
        frac = pos - fidx
        emp_pairs = (fidx, frac, offsets.astype(np.int64))

    history = [GridField(origin, delta, vals.copy())]
    for _ in range(n):
        vals = _u_step(model, vals, delta, mu_k0, mu_w, emp_pairs)
        if keep_history:
            history.append(GridField(origin, delta, vals.copy()))
    if keep_history:
        return history
    return GridField(origin, delta, vals)


# ---------------------------------------------------------------------------
# tilted-walk estimators


def lclt_limit(theta: float, f: TestFunction, c: float) -> float:
    """Limit constant e^{theta c} int e^{-theta y} f(y) dy of the scaled count."""
    return math.exp(theta * c) * f.weighted_integral(theta)


def v_tilted(model: OffspringModel, f: TestFunction, n: int, theta: float, c: float,
             n_walks: int, seed: int = 0, workers: int | None = None) -> EstimatorReport:
    """Unbiased estimate of e^{n Lambda*(a)} v_n[f](-na + c) over tilted walks."""
    spec = Spectrum(model)
    law = spec.tilt(theta)

    if n == 0:
        val = float(f(np.array([c]))[0])
        return EstimatorReport(val, 0.0, 1, seed, {"n_steps": 0})

    def block(i, size, rng):
        s_n = np.zeros(size)
        for _ in range(n):
            s_n += law.sample(rng, size)
        vals = np.exp(-theta * s_n) * f(s_n + c)
        return size, float(vals.sum()), float(np.dot(vals, vals))

    blocks = rngstreams.map_blocks(block, n_walks, seed, rngstreams.SALT_TILTED_WALK, workers)
    return report_from_moments(blocks, seed, {"theta": theta, "drift": law.drift,
                                              "sigma2": law.sigma2, "n_steps": n})


def _segment_sums(vals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Sums of vals over [offsets[i], offsets[i+1]); empty segments give 0."""
    cs = np.concatenate([[0.0], np.cumsum(vals)])
    return cs[offsets[1:]] - cs[offsets[:-1]]


class _HFactorEngine:
    """Shared machinery for the sibling-survival factor products."""

    def __init__(self, model, theta, u_fields, inner):
        self.model = model
        self.u_fields = u_fields
        self.inner = int(inner)
        self.law = Spectrum(model).tilt(theta)
        self.a = self.law.drift
        self.miss = 0
        self.reads = 0
        if not model.palm_exact:
            raise UnsupportedPalm(
                f"model {model.name!r} has no exact Palm kernel; H factors need one")

    def log_factors(self, r: int, s_args: np.ndarray, y: np.ndarray, rng) -> np.ndarray:
        """log H_r estimates; s_args shape (walks,) or (walks, nodes)."""
        u_field = self.u_fields[r - 1]
        n_walks = s_args.shape[0]
        est = None
        for _ in range(self.inner):
            flat, offsets = self.model.palm_batch(y, rng)
            beta = rng.random(n_walks)
            counts = np.diff(offsets)
            if s_args.ndim == 1:
                args = np.repeat(s_args, counts) + flat
                uvals, miss = u_field.value_at(args, count_miss=True)
                terms = np.log1p(-np.repeat(beta, counts) * uvals)
                h = np.exp(_segment_sums(terms, offsets))
            else:
                args = np.repeat(s_args, counts, axis=0) + flat[:, None]
                uvals, miss = u_field.value_at(args, count_miss=True)
                terms = np.log1p(-np.repeat(beta, counts)[:, None] * uvals)
                cs = np.concatenate([np.zeros((1, s_args.shape[1])), np.cumsum(terms, axis=0)])
                h = np.exp(cs[offsets[1:]] - cs[offsets[:-1]])
            self.miss += miss
            self.reads += args.size
            est = h if est is None else est + h
        return np.log(est / self.inner)

    def check_miss(self):
        if self.reads and self.miss / self.reads > MISS_RATE_LIMIT:
            raise GridMiss(
                f"{self.miss}/{self.reads} field lookups fell outside the window")


def u_palm_representation(model: OffspringModel, f: TestFunction, n: int, theta: float,
                          c: float, n_walks: int, inner: int = 1, seed: int = 0,
                          workers: int | None = None, u_fields=None,
                          delta: float | None = None) -> EstimatorReport:
    """Estimate e^{n Lambda*(a)} u_n[f](-na + c) by the Palm product formula.

    Per tilted path: e^{-theta S_n} f(S_n + c) times one independent inner
    estimate of H_r at (a + xi_r, c + S_n - S_r - r a) for each r = 1..n.
    """
    if n == 0:
        return EstimatorReport(float(f(np.array([c]))[0]), 0.0, 1, seed, {"n_steps": 0})
    if u_fields is None:
        u_fields = u_grid(model, f, n - 1, delta=delta, keep_history=True)
    eng = _HFactorEngine(model, theta, u_fields, inner)
    a, law = eng.a, eng.law
    h_lo, h_hi = [math.inf], [-math.inf]

    def block(i, size, rng):
        steps = law.sample(rng, (size, n))
        s = np.cumsum(steps, axis=1)
        s_n = s[:, -1]
        base = np.exp(-theta * s_n) * f(s_n + c)
        hit = np.flatnonzero(base > 0.0)
        logp = np.zeros(len(hit))
        for r in range(1, n + 1):
            y = a + steps[hit, r - 1]
            s_args = c + s_n[hit] - s[hit, r - 1] - r * a
            lf = eng.log_factors(r, s_args, y, rng)
            logp += lf
            if len(lf):
                h_lo[0] = min(h_lo[0], float(math.exp(lf.min())))
                h_hi[0] = max(h_hi[0], float(math.exp(lf.max())))
        vals = np.zeros(size)
        vals[hit] = base[hit] * np.exp(logp)
        return size, float(vals.sum()), float(np.dot(vals, vals))

    blocks = rngstreams.map_blocks(block, n_walks, seed, rngstreams.SALT_PALM_REP, workers)
    eng.check_miss()
    diag = {"theta": theta, "drift": a, "inner": inner,
            "h_min": h_lo[0] if math.isfinite(h_lo[0]) else 1.0,
            "h_max": h_hi[0] if math.isfinite(h_hi[0]) else 1.0,
            "miss_rate": eng.miss / max(eng.reads, 1)}
    return report_from_moments(blocks, seed, diag)


def _check_subcritical(model, theta) -> tuple[float, float]:
    spec = Spectrum(model)
    a = spec.dlambda(theta)
    _, lstar = spec.rate_function(a)
    if lstar <= 0:
        raise NotSubcritical(f"Lambda*(Lambda'({theta})) = {lstar:g} <= 0")
    if spec.d2lambda(theta) <= 0:
        raise UnsupportedModel("degenerate tilted walk (zero step variance)")
    return a, lstar


def estimate_G(model: OffspringModel, f: TestFunction, theta: float, y: float,
               r_max: int, n_walks: int, inner: int = 1, seed: int = 0,
               workers: int | None = None, u_fields=None,
               delta: float | None = None) -> EstimatorReport:
    """Truncated infinite product G[f](theta, y) over a fresh tilted walk.

    The factor at lag r uses the presence field with r-1 generations left, at
    argument y - a r - S_r; factors tend to 1 geometrically, so truncation at
    r_max is reported, not extrapolated.
    """
    est, se, n, diag, _blocks = _estimate_G_nodes(
        model, f, theta, np.array([float(y)]), r_max, n_walks, inner, seed,
        workers, u_fields, delta)
    return EstimatorReport(float(est[0]), float(se[0]), n, seed, diag)


G_BLOCK = 1024   # walks per replicate block for the product estimators


def _estimate_G_nodes(model, f, theta, y_nodes, r_max, n_walks, inner, seed,
                      workers, u_fields=None, delta=None):
    _check_subcritical(model, theta)
    if u_fields is None:
        u_fields = u_grid(model, f, r_max - 1, delta=delta, keep_history=True)
    if len(u_fields) < r_max:
        raise ValueError("need presence fields down to depth r_max - 1")
    eng = _HFactorEngine(model, theta, u_fields, inner)
    a, law = eng.a, eng.law
    tail_dev = [0.0]
    r_cut = max(r_max - 5, 1)

    def block(i, size, rng):
        logp = np.zeros((size, len(y_nodes)))
        s_r = np.zeros(size)
        for r in range(1, r_max + 1):
            xi = law.sample(rng, size)
            s_r = s_r + xi
            y_palm = a + xi
            s_args = y_nodes[None, :] - a * r - s_r[:, None]
            lf = eng.log_factors(r, s_args, y_palm, rng)
            logp += lf
            if r > r_cut and lf.size:
                tail_dev[0] = max(tail_dev[0], float(np.abs(np.expm1(lf)).max()))
        g = np.exp(logp)
        return size, g.sum(axis=0), (g * g).sum(axis=0)

    blocks = rngstreams.map_blocks(block, n_walks, seed, rngstreams.SALT_G_PRODUCT,
                                   workers, block=G_BLOCK)
    eng.check_miss()
    n_tot = sum(b[0] for b in blocks)
    s1 = np.sum([b[1] for b in blocks], axis=0)
    s2 = np.sum([b[2] for b in blocks], axis=0)
    mean = s1 / n_tot
    var = np.maximum(s2 - n_tot * mean * mean, 0.0) / max(n_tot - 1, 1)
    se = np.sqrt(var / n_tot)
    diag = {"r_max": r_max, "tail_factor_dev": tail_dev[0],
            "miss_rate": eng.miss / max(eng.reads, 1), "inner": inner}
    return mean, se, n_tot, diag, blocks


def estimate_K(model: OffspringModel, f: TestFunction, theta: float, r_max: int = 30,
               n_walks: int = 20_000, inner: int = 1, seed: int = 0,
               workers: int | None = None, delta: float | None = None) -> EstimatorReport:
    """Presence-to-count limit ratio K as a weighted quadrature of G over the window.

    K = int e^{-theta y} f(y) G(theta, y) dy / int e^{-theta y} f(y) dy with the
    numerator on the window lattice, one G estimate per node.  The node
    estimates share walks, so the stderr comes from block-level replicates of
    the whole quadrature, not from per-node variances.
    """
    delta = delta or default_delta(f)
    m = int(round((f.beta - f.alpha) / delta))
    y_nodes = f.alpha + delta * (np.arange(m) + 0.5)
    fw = f(y_nodes)
    wts = np.exp(-theta * y_nodes) * fw * delta
    denom = wts.sum()
    if denom <= 0:
        raise ValueError("window function has zero weighted mass")

    u_fields = u_grid(model, f, r_max - 1, delta=delta, keep_history=True)
    mean, _se, n_tot, diag, blocks = _estimate_G_nodes(
        model, f, theta, y_nodes, r_max, n_walks, inner, seed, workers,
        u_fields, delta)
    k = float(np.dot(wts, mean) / denom)
    k_blocks = np.array([float(np.dot(wts, b[1] / b[0]) / denom) for b in blocks])
    sizes = np.array([b[0] for b in blocks], dtype=float)
    if len(k_blocks) > 1:
        k_bar = float(np.dot(sizes, k_blocks) / sizes.sum())
        var_b = float(np.dot(sizes, (k_blocks - k_bar) ** 2) / sizes.sum())
        k_se = math.sqrt(var_b / max(len(k_blocks) - 1, 1))
    else:
        k_se = float("nan")
    diag = dict(diag)
    diag.update({"g_min": float(mean.min()), "g_max": float(mean.max()), "nodes": m,
                 "n_blocks": len(k_blocks)})
    return EstimatorReport(k, k_se, n_tot, seed, diag)


# ---------------------------------------------------------------------------
# brute-force oracle


def simulate_population(model: OffspringModel, n: int, cap: int = 10_000_000,
                        rng=None, seed: int = 0) -> np.ndarray:
    """Positions of generation n by direct tree simulation (small-n oracle)."""
    if rng is None:
        rng = rngstreams.substream(seed, rngstreams.SALT_POPULATION, 0)
    pos = np.zeros(1)
    for _ in range(int(n)):
        if len(pos) == 0:
            break
        flats, counts = [], np.empty(len(pos), dtype=np.int64)
        for j, x in enumerate(pos):
            cfg = model.sample(rng)
            counts[j] = len(cfg)
            flats.append(cfg)
        total = int(counts.sum())
        if total > cap:
            raise CapExceeded(f"population {total} exceeds cap {cap}")
        pos = np.repeat(pos, counts) + (np.concatenate(flats) if total else np.empty(0))
    return pos


def presence_frequency(model: OffspringModel, f: TestFunction, n: int, probes,
                       n_runs: int, seed: int = 0, workers: int | None = None):
    """MC frequency of {generation n charges the window shifted to each probe}."""
    probes = np.atleast_1d(np.asarray(probes, dtype=float))

    def block(i, size, rng):
        hits = np.zeros(len(probes))
        for _ in range(size):
            pos = simulate_population(model, n, rng=rng)
            if len(pos):
                present = f(probes[:, None] + pos[None, :]).max(axis=1) > 0
                hits += present
        return size, hits

    blocks = rngstreams.map_blocks(block, n_runs, seed, rngstreams.SALT_POPULATION, workers)
    n_tot = sum(b[0] for b in blocks)
    hits = np.sum([b[1] for b in blocks], axis=0)
    freq = hits / n_tot
    se = np.sqrt(np.maximum(freq * (1 - freq), 0.0) / n_tot)
    return freq, se
