"""Finite-activity homogeneous fragmentation: dislocation models, exact
simulation, windowed-count estimators, the mean-one additive martingale, and
discrete skeleton extraction.

A dislocation model carries a finite total split rate and a sampler of ranked
mass fractions summing to one (conservative splits).  Every live fragment
splits at the same rate regardless of its mass, so fragments evolve
independently and a path can be sampled by a depth-first walk over the split
tree; that walk is the hot kernel in ``_kernels``.

Pruning: fragments whose log-mass falls below a threshold are moved to a mass
ledger and stop branching.  Masses only decrease, so a constant threshold
strictly below the observation window leaves windowed counts exact while
making the cost per path polynomial in t.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, polygamma

from . import rngstreams
from ._kernels import (SPLIT_BETA, SPLIT_DYADIC, SPLIT_UNIFORM,
                       frag_counts_block, frag_masses_block)
from .analytic import FragSpectrum
from .errors import (BelowDomain, GeometricModel, NotSubcritical,
                     PopulationCap, PruningBias, UnsupportedSizeBiased)
from .offspring import EmpiricalModel
from .reporting import EstimatorReport

NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# dislocation models


class DislocationModel:
    """Finite dislocation measure with ranked binary splits."""

    name = "dislocation"
    kind_code = SPLIT_UNIFORM
    draws_per_event = 1
    geometric_r: float | None = None

    def __init__(self, rate: float = 1.0):
        if rate <= 0 or not math.isfinite(rate):
            raise ValueError("total split rate must be finite and positive")
        self.rate = float(rate)

    # --- split sampling ------------------------------------------------------
    def split(self, rng) -> np.ndarray:
        raise NotImplementedError

    def sample_split_draws(self, rng, n: int) -> np.ndarray:
        """Per-event variates consumed by the tree kernels."""
        raise NotImplementedError

    # --- growth exponent ------------------------------------------------------
    p_lower = -math.inf

    def _check_p(self, p: float) -> None:
        if p <= self.p_lower:
            raise BelowDomain(f"p={p} <= {self.p_lower}")

    def phi(self, p: float) -> float:
        raise NotImplementedError

    def dphi(self, p: float) -> float:
        raise NotImplementedError

    def d2phi(self, p: float) -> float:
        raise NotImplementedError

    # --- size-biased pick / tilted jump structure -----------------------------
    def sample_size_biased(self, rng, size=None):
        """Mass fraction of a size-biased pick under the split law."""
        raise UnsupportedSizeBiased(self.name)

    def tilted_jump_rate(self, p: float) -> float:
        """Total rate of the jump measure e^{-p Delta} L(dDelta)."""
        raise UnsupportedSizeBiased(self.name)

    def sample_tilted_jumps(self, p: float, rng, size: int) -> np.ndarray:
        raise UnsupportedSizeBiased(self.name)

    def total_tilted_jumps(self, p: float, rng, counts: np.ndarray) -> np.ndarray:
        """Sum of counts[i] tilted jumps per path."""
        total = int(counts.sum())
        flat = self.sample_tilted_jumps(p, rng, total)
        offsets = np.zeros(len(counts) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        cs = np.concatenate([[0.0], np.cumsum(flat)])
        return cs[offsets[1:]] - cs[offsets[:-1]]

    def palm_remainder_logs(self, x_star) -> np.ndarray:
        """Sibling log-masses given the size-biased pick; binary: log(1-x)."""
        return np.atleast_1d(np.log1p(-np.asarray(x_star, dtype=float)))


class UniformBinary(DislocationModel):
    """Split at (max(U, 1-U), min(U, 1-U)) with U uniform.

    Closed forms: Phi(p) = rate p/(p+2); the size-biased pick has density 2u,
    so the jump measure is 2 rate e^{-2 Delta} and the p-tilted jumps are
    Exp(p+2) at total rate 2 rate/(p+2).
    """

    name = "uniform-binary"
    kind_code = SPLIT_UNIFORM
    p_lower = -2.0

    def split(self, rng):
        u = rng.random()
        hi = max(u, 1.0 - u)
        return np.array([hi, 1.0 - hi])

    def sample_split_draws(self, rng, n):
        return rng.random(n)

    def phi(self, p):
        self._check_p(p)
        return self.rate * p / (p + 2.0)

    def dphi(self, p):
        self._check_p(p)
        return self.rate * 2.0 / (p + 2.0) ** 2

    def d2phi(self, p):
        self._check_p(p)
        return self.rate * -4.0 / (p + 2.0) ** 3

    def sample_size_biased(self, rng, size=None):
        b = rng.random(size)
        pick = rng.random(size) < b
        return np.where(pick, b, 1.0 - b)

    def tilted_jump_rate(self, p):
        self._check_p(p)
        return 2.0 * self.rate / (p + 2.0)

    def sample_tilted_jumps(self, p, rng, size):
        self._check_p(p)
        return rng.exponential(1.0 / (p + 2.0), size)

    def total_tilted_jumps(self, p, rng, counts):
        self._check_p(p)
        out = np.zeros(len(counts))
        nz = counts > 0
        if nz.any():
            out[nz] = rng.gamma(counts[nz], 1.0 / (p + 2.0))
        return out


class Dyadic(DislocationModel):
    """Deterministic halving; 2-geometric, so skeleton-constant claims are off."""

    name = "dyadic"
    kind_code = SPLIT_DYADIC
    draws_per_event = 0
    geometric_r = 2.0
    p_lower = -math.inf

    def split(self, rng):
        return np.array([0.5, 0.5])

    def sample_split_draws(self, rng, n):
        return np.empty(0)

    def phi(self, p):
        return self.rate * -math.expm1(-p * math.log(2.0))

    def dphi(self, p):
        return self.rate * math.log(2.0) * 2.0 ** (-p)

    def d2phi(self, p):
        return -self.rate * math.log(2.0) ** 2 * 2.0 ** (-p)

    def sample_size_biased(self, rng, size=None):
        if size is None:
            return 0.5
        return np.full(size, 0.5)

    def tilted_jump_rate(self, p):
        return self.rate * 2.0 ** (-p)

    def sample_tilted_jumps(self, p, rng, size):
        return np.full(size, math.log(2.0))

    def total_tilted_jumps(self, p, rng, counts):
        return counts * math.log(2.0)


class BetaSplit(DislocationModel):
    """Split at (max(B, 1-B), min(B, 1-B)) with B ~ Beta(a, b)."""

    name = "beta-split"
    kind_code = SPLIT_BETA

    def __init__(self, a: float, b: float, rate: float = 1.0):
        super().__init__(rate)
        if a <= 0 or b <= 0:
            raise ValueError("beta parameters must be positive")
        self.a = float(a)
        self.b = float(b)
        self.p_lower = -1.0 - min(a, b)
        self.name = f"beta-split({a:g},{b:g})"

    def split(self, rng):
        v = rng.beta(self.a, self.b)
        hi = max(v, 1.0 - v)
        return np.array([hi, 1.0 - hi])

    def sample_split_draws(self, rng, n):
        return rng.beta(self.a, self.b, n)

    def _moment(self, q: float, side: int) -> float:
        # E[B^q] or E[(1-B)^q]
        a, b = (self.a, self.b) if side == 0 else (self.b, self.a)
        return math.exp(betaln(a + q, b) - betaln(a, b))

    def phi(self, p):
        self._check_p(p)
        return self.rate * (1.0 - self._moment(p + 1.0, 0) - self._moment(p + 1.0, 1))

    def _dmoment(self, q, side, order):
        a, b = (self.a, self.b) if side == 0 else (self.b, self.a)
        m = math.exp(betaln(a + q, b) - betaln(a, b))
        d1 = polygamma(0, a + q) - polygamma(0, a + b + q)
        if order == 1:
            return m * d1
        d2 = polygamma(1, a + q) - polygamma(1, a + b + q)
        return m * (d1 * d1 + d2)

    def dphi(self, p):
        self._check_p(p)
        return -self.rate * (self._dmoment(p + 1.0, 0, 1) + self._dmoment(p + 1.0, 1, 1))

    def d2phi(self, p):
        self._check_p(p)
        return -self.rate * (self._dmoment(p + 1.0, 0, 2) + self._dmoment(p + 1.0, 1, 2))

    def sample_size_biased(self, rng, size=None):
        v = rng.beta(self.a, self.b, size)
        pick = rng.random(size) < v
        return np.where(pick, v, 1.0 - v)

    def tilted_jump_rate(self, p):
        self._check_p(p)
        return self.rate * (self._moment(p + 1.0, 0) + self._moment(p + 1.0, 1))

    def sample_tilted_jumps(self, p, rng, size):
        # rejection from the size-biased pick law with acceptance x^p; valid p >= 0
        self._check_p(p)
        if p < 0:
            raise UnsupportedSizeBiased("beta-split tilted jumps need p >= 0")
        out = np.empty(size)
        filled = 0
        while filled < size:
            k = max(size - filled, 32)
            x = self.sample_size_biased(rng, 2 * k)
            acc = rng.random(2 * k) < x ** p
            got = x[acc]
            take = min(len(got), size - filled)
            out[filled:filled + take] = got[:take]
            filled += take
        return -np.log(out)


def make_dislocation(name: str, **params) -> DislocationModel:
    key = name.lower().replace("_", "-")
    rate = float(params.pop("rate", 1.0))
    if key == "uniform-binary":
        _reject(params, name)
        return UniformBinary(rate)
    if key == "dyadic":
        _reject(params, name)
        return Dyadic(rate)
    if key == "beta-split":
        a = float(params.pop("a"))
        b = float(params.pop("b"))
        _reject(params, name)
        return BetaSplit(a, b, rate)
    raise ValueError(f"unknown dislocation model {name!r}")


def _reject(params, name):
    if params:
        raise ValueError(f"unknown parameters for {name!r}: {sorted(params)}")


# ---------------------------------------------------------------------------
# reference chronological simulator (rich state, small scale)


@dataclass
class FragmentationState:
    """Ranked fragment population with ancestry and a pruned-mass ledger."""

    t: float
    log_masses: np.ndarray              # live fragments, ranked descending
    fragments: list = field(default_factory=list)   # (log_mass, id, parent_id)
    pruned_log_masses: np.ndarray = field(default_factory=lambda: np.empty(0))
    pruned_mass: float = 0.0
    events: list | None = None

    def total_mass(self) -> float:
        return float(np.exp(self.log_masses).sum() + self.pruned_mass)


def simulate_fragmentation(d: DislocationModel, t: float, prune=None, rng=None,
                           seed: int = 0, cap: int = 10_000_000,
                           record_events: bool = False, snapshots=None):
    """Chronological event-driven simulation (independent of the DFS kernels).

    ``prune`` is a constant threshold or a callable s -> threshold on
    log-mass; pruned fragments keep their mass but stop branching.
    ``snapshots`` requests intermediate states; the return value is then a
    list of states aligned with the sorted snapshot times plus the final one.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if rng is None:
        rng = rngstreams.substream(seed, rngstreams.SALT_FRAG_MASSES, 0)
    thresh = (lambda s: NEG_INF) if prune is None else (
        prune if callable(prune) else (lambda s, v=float(prune): v))

    snaps = sorted(float(s) for s in (snapshots or [])) + [float(t)]
    out_states = []
    events = [] if record_events else None

    # heap of (next split time, fragment id); fragments[id] = (log_mass, parent)
    frags: dict[int, tuple[float, int]] = {0: (0.0, -1)}
    next_id = 1
    heap = [(rng.standard_exponential() / d.rate, 0)]
    pruned_logs: list[float] = []
    pruned_mass = 0.0
    now = 0.0
    si = 0
    while True:
        t_ev = heap[0][0] if heap else math.inf
        while si < len(snaps) and snaps[si] <= min(t_ev, t):
            lm = np.sort(np.array([v[0] for v in frags.values()]))[::-1]
            out_states.append(FragmentationState(
                t=snaps[si], log_masses=lm,
                fragments=[(v[0], k, v[1]) for k, v in sorted(frags.items())],
                pruned_log_masses=np.array(sorted(pruned_logs, reverse=True)),
                pruned_mass=pruned_mass,
                events=list(events) if events is not None else None))
            si += 1
        if si >= len(snaps):
            break
        if not heap or t_ev > t:
            # no more events before t; flush remaining snapshots next loop
            continue
        t_ev, fid = heapq.heappop(heap)
        now = t_ev
        lm, _parent = frags[fid]
        parts = d.split(rng)
        if events is not None:
            events.append((now, fid, [lm + math.log(s) for s in parts]))
        del frags[fid]
        for s_frac in parts:
            clm = lm + math.log(s_frac)
            if clm < thresh(now):
                pruned_logs.append(clm)
                pruned_mass += math.exp(clm)
                continue
            frags[next_id] = (clm, fid)
            heapq.heappush(heap, (now + rng.standard_exponential() / d.rate, next_id))
            next_id += 1
        if len(frags) > cap:
            raise PopulationCap(f"live population {len(frags)} exceeds cap {cap}")

    return out_states if snapshots else out_states[-1]


# ---------------------------------------------------------------------------
# kernel-backed block sampling


def _events_guess(rate: float, t: float) -> int:
    return max(48, int(32 + 8.0 * rate * t))


def _counts_block(d, t, lo, hi, log_prune, size, seed, salt, i):
    cap = size * _events_guess(d.rate, t)
    stack_cap = 4096
    while True:
        rng = rngstreams.substream(seed, salt, i)
        exp_draws = rng.standard_exponential(cap)
        split_draws = d.sample_split_draws(rng, 0 if d.draws_per_event == 0 else cap)
        out = np.zeros(8)
        frag_counts_block(exp_draws, split_draws, size, t, d.rate, d.kind_code,
                          lo, hi, log_prune, np.empty(stack_cap), np.empty(stack_cap), out)
        if out[0] == 1.0:
            return out
        if out[0] == -3.0:
            stack_cap *= 2
        else:
            cap *= 2
        if cap > 2 ** 31 or stack_cap > 2 ** 26:
            raise PopulationCap(
                f"tree walk exceeded buffer budget at t={t}; prune missing or ineffective")


def _masses_block(d, t, log_prune, size, seed, salt, i):
    cap = size * _events_guess(d.rate, t)
    stack_cap = 4096
    while True:
        rng = rngstreams.substream(seed, salt, i)
        exp_draws = rng.standard_exponential(cap)
        split_draws = d.sample_split_draws(rng, 0 if d.draws_per_event == 0 else cap)
        flat = np.empty(cap + size)
        offsets = np.zeros(size + 1, dtype=np.int64)
        pruned = np.zeros(size)
        out = np.zeros(8)
        frag_masses_block(exp_draws, split_draws, size, t, d.rate, d.kind_code,
                          log_prune, np.empty(stack_cap), np.empty(stack_cap),
                          flat, offsets, pruned, out)
        if out[0] == 1.0:
            return flat[:offsets[-1]].copy(), offsets, pruned
        if out[0] == -3.0:
            stack_cap *= 2
        else:
            cap *= 2
        if cap > 2 ** 31 or stack_cap > 2 ** 26:
            raise PopulationCap(
                f"tree walk exceeded buffer budget at t={t}; prune missing or ineffective")


def sample_final_masses(d: DislocationModel, t: float, n_paths: int, seed: int = 0,
                        workers: int | None = None, log_prune: float = NEG_INF,
                        salt: int = rngstreams.SALT_FRAG_MASSES):
    """Final log-masses of n_paths independent paths as (flat, offsets, pruned)."""
    sizes = rngstreams.split_blocks(n_paths, block=2048)
    results = _run_indexed(
        lambda i: _masses_block(d, t, log_prune, sizes[i], seed, salt, i),
        len(sizes), workers)
    flats = [r[0] for r in results]
    counts = np.concatenate([np.diff(r[1]) for r in results])
    offsets = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    flat = np.concatenate(flats) if flats else np.empty(0)
    pruned = np.concatenate([r[2] for r in results])
    return flat, offsets, pruned


def _run_indexed(fn, n_blocks: int, workers: int | None):
    if workers is None:
        workers = rngstreams.default_workers()
    if workers <= 1 or n_blocks <= 1:
        return [fn(i) for i in range(n_blocks)]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(n_blocks)))


# ---------------------------------------------------------------------------
# estimators


def estimate_UV(d: DislocationModel, p: float, t: float, alpha: float, beta: float,
                n_runs: int, seed: int = 0, workers: int | None = None,
                prune_margin: float = 2.0, enforce_subcritical: bool = True,
                c: float = 0.0):
    """Presence frequency U and mean count V in the travelling window.

    The window is [alpha + x, beta + x] on log-mass with x = -t Phi'(p) + c.
    Pruning strictly below the window is exact for both statistics (masses
    only decrease).
    """
    fs = FragSpectrum(d)
    if enforce_subcritical:
        p_bar = fs.p_bar
        if p <= p_bar:
            raise NotSubcritical(f"p={p} <= p_bar={p_bar:.6g}; pass "
                                 "enforce_subcritical=False to override")
    x = -t * d.dphi(p) + c
    lo, hi = alpha + x, beta + x
    log_prune = lo - abs(prune_margin)

    sizes = rngstreams.split_blocks(n_runs, block=2048)
    outs = _run_indexed(
        lambda i: _counts_block(d, t, lo, hi, log_prune, sizes[i], seed,
                                rngstreams.SALT_FRAG_COUNTS, i),
        len(sizes), workers)
    n = sum(sizes)
    hits = sum(o[1] for o in outs)
    csum = sum(o[2] for o in outs)
    csq = sum(o[3] for o in outs)
    events = sum(o[4] for o in outs)
    cons = max(o[5] for o in outs)

    diag = {"window_lo": lo, "window_hi": hi, "log_prune": log_prune,
            "events": events, "max_conservation_err": cons, "t": t, "p": p}
    u_hat = hits / n
    u_se = math.sqrt(max(u_hat * (1 - u_hat), 0.0) / n)
    v_hat = csum / n
    v_var = max(csq - n * v_hat * v_hat, 0.0) / max(n - 1, 1)
    v_se = math.sqrt(v_var / n)
    u_rep = EstimatorReport(u_hat, u_se, n, seed, diag)
    v_rep = EstimatorReport(v_hat, v_se, n, seed, dict(diag))
    return u_rep, v_rep


def martingale_value(d: DislocationModel, p: float, state: FragmentationState,
                     allow_pruned: bool = False) -> float:
    """M(p, t) = e^{t Phi(p)} sum_i X_i(t)^{p+1} for one path state."""
    fs = FragSpectrum(d)
    if p <= fs.p_lower:
        raise BelowDomain(f"p={p} <= p_lower={fs.p_lower}")
    if state.pruned_mass > 0.0 and not allow_pruned:
        raise PruningBias("state carries pruned mass; martingale would be biased")
    logs = state.log_masses
    if allow_pruned and len(state.pruned_log_masses):
        logs = np.concatenate([logs, state.pruned_log_masses])
    return float(math.exp(state.t * d.phi(p)) * np.exp((p + 1.0) * logs).sum())


def martingale_mean(d: DislocationModel, p: float, t: float, n_runs: int,
                    seed: int = 0, workers: int | None = None) -> EstimatorReport:
    """Sample mean of M(p, t) over independent unpruned paths (target 1)."""
    flat, offsets, _ = sample_final_masses(d, t, n_runs, seed, workers=workers)
    vals = np.exp((p + 1.0) * flat)
    sums = np.add.reduceat(vals, offsets[:-1]) * math.exp(t * d.phi(p))
    se = float(sums.std(ddof=1) / math.sqrt(n_runs))
    return EstimatorReport(float(sums.mean()), se, n_runs, seed, {"t": t, "p": p})


def build_skeleton_ensemble(d: DislocationModel, h: float, size: int, seed: int = 0,
                            workers: int | None = None) -> EmpiricalModel:
    """Empirical offspring model of the mesh-h skeleton (log-mass children)."""
    if h <= 0:
        raise ValueError("mesh h must be positive")
    flat, offsets, _ = sample_final_masses(d, h, size, seed, workers=workers,
                                           salt=rngstreams.SALT_SKELETON)
    configs = [flat[offsets[i]:offsets[i + 1]] for i in range(size)]
    return EmpiricalModel(configs, name=f"skeleton({d.name},h={h:g})")


def require_non_geometric(d: DislocationModel) -> None:
    if d.geometric_r is not None:
        raise GeometricModel(
            f"{d.name} is {d.geometric_r:g}-geometric; skeleton-constant claims need "
            "a non-geometric dislocation measure")
