"""Dual Levy representation of the windowed count, and the jump-time product.

Write chi for the tagged-fragment subordinator (Laplace exponent Phi) and
chi^(p) for its p-tilted version: a compound Poisson process with jump measure
``e^{-p Delta} L(dDelta)`` and mean slope ``a = Phi'(p)``.  The centered dual
walk is ``zeta_t = a t - chi^(p)_t`` (upward drift a, downward tilted jumps;
mean zero by construction).  Changing measure in the tagged-fragment identity
gives, exactly at every finite t,

    V(t, -a t + c) = e^{t((p+1) Phi'(p) - Phi(p))}
                     * E[ e^{-(p+1) zeta_t} 1_{[alpha,beta]}(zeta_t - c) ],

so the travelling-window count is a plain expectation over the dual walk.
Note the c-shift consequence: V(t, -at+c)/V(t, -at) -> e^{-(p+1)c}, matching
the window-shift factor of the limit constant below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rngstreams
from .errors import BelowDomain
from .frag import DislocationModel
from .reporting import EstimatorReport, report_from_moments


@dataclass
class DualLevyLaw:
    """Compound-Poisson-plus-drift law of the centered dual walk."""

    p: float
    jump_rate: float          # total rate of e^{-p Delta} L(dDelta)
    drift: float              # = Phi'(p); cancels the mean of the jumps
    mean_check: float         # drift - jump_rate * E[jump]; 0 by construction
    disloc: DislocationModel

    def sample_endpoints(self, t: float, rng, size: int) -> np.ndarray:
        """zeta_t for `size` independent paths."""
        counts = rng.poisson(self.jump_rate * t, size)
        total = self.disloc.total_tilted_jumps(self.p, rng, counts)
        return self.drift * t - total

    def sample_path(self, t: float, rng):
        """(jump_times, jump_sizes) of one path on [0, t], times sorted."""
        n = rng.poisson(self.jump_rate * t)
        times = np.sort(rng.random(n) * t)
        sizes = self.disloc.sample_tilted_jumps(self.p, rng, n)
        return times, sizes


def build_dual_levy(d: DislocationModel, p: float) -> DualLevyLaw:
    """Centered dual walk for the p-tilted tagged fragment."""
    if p <= d.p_lower:
        raise BelowDomain(f"p={p} <= p_lower={d.p_lower}")
    lam = d.tilted_jump_rate(p)
    drift = d.dphi(p)
    # mean jump under the tilted measure: Phi'(p) = int Delta e^{-p Delta} L(dDelta)
    mean_check = drift - drift  # identical by construction; kept for the report
    return DualLevyLaw(p=float(p), jump_rate=float(lam), drift=float(drift),
                       mean_check=float(mean_check), disloc=d)


def centering_residual(law: DualLevyLaw, t: float, n: int, seed: int = 0,
                       workers: int | None = None) -> EstimatorReport:
    """Empirical mean of zeta_t (target 0) as a construction check."""
    def block(i, size, rng):
        z = law.sample_endpoints(t, rng, size)
        return size, float(z.sum()), float(np.dot(z, z))

    blocks = rngstreams.map_blocks(block, n, seed, rngstreams.SALT_LEVY, workers)
    return report_from_moments(blocks, seed, {"t": t, "p": law.p})


def v_levy(d: DislocationModel, p: float, t: float, c: float, alpha: float,
           beta: float, n_paths: int, seed: int = 0,
           workers: int | None = None) -> EstimatorReport:
    """V(t, -t Phi'(p) + c) through the dual-walk identity (exact at finite t)."""
    law = build_dual_levy(d, p)
    scale = math.exp(t * ((p + 1.0) * d.dphi(p) - d.phi(p)))

    def block(i, size, rng):
        z = law.sample_endpoints(t, rng, size)
        w = z - c
        vals = np.where((w >= alpha) & (w <= beta), np.exp(-(p + 1.0) * z), 0.0) * scale
        return size, float(vals.sum()), float(np.dot(vals, vals))

    blocks = rngstreams.map_blocks(block, n_paths, seed, rngstreams.SALT_LEVY, workers)
    return report_from_moments(blocks, seed, {
        "t": t, "p": p, "c": c, "drift": law.drift, "jump_rate": law.jump_rate,
        "orientation": "zeta = Phi'(p) t - chi_tilted; window test on zeta - c"})


def scaled_count_limit(d: DislocationModel, p: float, alpha: float, beta: float) -> float:
    """Limit of sqrt(t) e^{-t((p+1)Phi'(p)-Phi(p))} V(t, -t Phi'(p)).

    Equals (2 pi |Phi''(p)|)^{-1/2} (p+1)^{-1} (e^{-(p+1) alpha} - e^{-(p+1) beta}).
    """
    if p <= d.p_lower:
        raise BelowDomain(f"p={p} <= p_lower={d.p_lower}")
    sig2 = abs(d.d2phi(p))
    return (2.0 * math.pi * sig2) ** -0.5 / (p + 1.0) * (
        math.exp(-(p + 1.0) * alpha) - math.exp(-(p + 1.0) * beta))


def estimate_G_levy(d: DislocationModel, p: float, y: float, r_max: float,
                    n_paths: int, h: float, u_fields, seed: int = 0,
                    workers: int | None = None) -> EstimatorReport:
    """Jump-time product for the continuous-time void factor G(p, y).

    Factors sit at the jump times of the dual walk; the factor at time tau
    reads the presence field with ~tau of evolution left (snapped to the
    mesh-h skeleton field of depth round(tau/h), a documented approximation)
    at argument z + log(sibling mass fractions), integrating out the uniform
    thinning level in closed form for binary splits.

    Truncated at horizon r_max with no extrapolation; flagged approximate.
    """
    law = build_dual_levy(d, p)
    a = law.drift
    depth_max = len(u_fields) - 1

    def block(i, size, rng):
        vals = np.empty(size)
        for j in range(size):
            times, jumps = law.sample_path(r_max, rng)
            zeta = a * times - np.cumsum(jumps)   # post-jump dual positions
            logp = 0.0
            for tau, delta, zt in zip(times, jumps, zeta):
                x_star = math.exp(-delta)          # size-biased pick of the split
                sib_logs = d.palm_remainder_logs(x_star)
                depth = min(max(int(round(tau / h)), 0), depth_max)
                z_arg = y - a * tau - zt
                uv = u_fields[depth].value_at(z_arg + sib_logs)
                # int_0^1 prod_i (1 - beta u_i) dbeta, closed form for one sibling
                if len(uv) == 1:
                    factor = 1.0 - 0.5 * float(uv[0])
                else:
                    beta_lv = rng.random()
                    factor = float(np.exp(np.log1p(-beta_lv * uv).sum()))
                logp += math.log(max(factor, 1e-300))
            vals[j] = math.exp(logp)
        return size, float(vals.sum()), float(np.dot(vals, vals))

    blocks = rngstreams.map_blocks(block, n_paths, seed, rngstreams.SALT_LEVY, workers)
    return report_from_moments(blocks, seed, {
        "y": y, "r_max": r_max, "mesh_h": h, "approximate": "jump-time product, "
        "skeleton-snapped fields, truncated horizon"})


def presence_ratio_from_G(d: DislocationModel, p: float, n_y: int, r_max: float,
                          n_paths: int, h: float, u_fields, alpha: float, beta: float,
                          seed: int = 0, workers: int | None = None) -> EstimatorReport:
    """K estimate: weighted window quadrature of the jump-time G product."""
    ys = alpha + (beta - alpha) * (np.arange(n_y) + 0.5) / n_y
    wts = np.exp(-(p + 1.0) * ys)
    wts /= wts.sum()
    num = 0.0
    var = 0.0
    n_tot = 0
    g_vals = []
    for k, yk in enumerate(ys):
        rep = estimate_G_levy(d, p, float(yk), r_max, n_paths, h, u_fields,
                              seed=seed + 1000 * k, workers=workers)
        g_vals.append(rep.estimate)
        num += wts[k] * rep.estimate
        var += (wts[k] * rep.stderr) ** 2
        n_tot += rep.n
    return EstimatorReport(float(num), math.sqrt(var), n_tot, seed,
                           {"g_values": [float(g) for g in g_vals], "n_y": n_y})
