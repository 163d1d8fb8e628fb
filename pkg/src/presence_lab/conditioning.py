"""Skeleton-grid consumers: the mesh-invariant ratio constant and the
conditioning-on-presence experiment.

Both build the empirical skeleton offspring model of the fragmentation at a
mesh h and run the exact lattice recursions of :mod:`presence_lab.brw` on it;
a skeleton generation n is the fragmentation observed at time n h, exactly in
law up to the finite-ensemble approximation.
"""
from __future__ import annotations

import math

import numpy as np

from . import rngstreams
from .analytic import FragSpectrum
from .brw import u_grid, v_grid
from .errors import NotSubcritical
from .frag import (DislocationModel, build_skeleton_ensemble, require_non_geometric,
                   sample_final_masses)
from .grids import TestFunction
from .offspring import EmpiricalModel
from .reporting import EstimatorReport


def _integer_depth(total_time: float, h: float) -> int:
    depth = round(total_time / h)
    if abs(depth * h - total_time) > 1e-9 or depth < 1:
        raise ValueError(f"total time {total_time} is not a positive multiple of mesh {h}")
    return int(depth)


def _check_window_exponent(d: DislocationModel, p: float, enforce: bool = True) -> None:
    if not enforce:
        return
    p_bar = FragSpectrum(d).p_bar
    if p <= p_bar:
        raise NotSubcritical(f"p={p} <= p_bar={p_bar:.6g}")


def Kp_via_skeleton(d: DislocationModel, p: float, h: float, alpha: float, beta: float,
                    total_time: float, ensemble_size: int = 10_000,
                    delta: float | None = None, c: float = 0.0, seed: int = 0,
                    workers: int | None = None, jackknife_groups: int = 6,
                    enforce_subcritical: bool = True) -> EstimatorReport:
    """Presence-to-count ratio of the mesh-h skeleton at matched total time.

    Maps theta = p+1 so the skeleton walk drift is a_h = -h Phi'(p), then
    returns u_n / v_n at the travelling evaluation point with n = total_time/h.
    The estimate converges (in mesh and in depth) to the same constant for any
    mesh, provided the dislocation measure is non-geometric.
    """
    require_non_geometric(d)
    _check_window_exponent(d, p, enforce_subcritical)
    depth = _integer_depth(total_time, h)
    model = build_skeleton_ensemble(d, h, ensemble_size, seed=seed, workers=workers)
    f = TestFunction.indicator(alpha, beta)
    x_star = d.dphi(p) * total_time + c

    def ratio_for(m: EmpiricalModel) -> float:
        u = u_grid(m, f, depth, delta=delta, targets=[x_star])
        v = v_grid(m, f, depth, delta=delta, targets=[x_star])
        uv, vv = float(u.value_at(x_star)), float(v.value_at(x_star))
        if vv <= 0.0:
            return float("nan")
        return uv / vv

    k_hat = ratio_for(model)

    se = 0.0
    if jackknife_groups and jackknife_groups > 1:
        g = int(jackknife_groups)
        configs = [model.config(i) for i in range(model.n_configs)]
        vals = []
        for j in range(g):
            keep = [cfg for i, cfg in enumerate(configs) if i % g != j]
            vals.append(ratio_for(EmpiricalModel(keep, name=model.name)))
        vals = np.array(vals)
        se = math.sqrt(max((g - 1) / g * np.sum((vals - vals.mean()) ** 2), 0.0))

    diag = {"mesh_h": h, "depth": depth, "x_star": x_star, "c": c,
            "ensemble": ensemble_size, "a_h": -h * d.dphi(p),
            "jackknife_groups": jackknife_groups}
    return EstimatorReport(k_hat, se, ensemble_size, seed, diag)


def conditioned_law(d: DislocationModel, p: float, s: float, t: float, event,
                    alpha: float, beta: float, h: float = 0.25,
                    ensemble_size: int = 10_000, delta: float | None = None,
                    n_paths: int = 100_000, seed: int = 0,
                    workers: int | None = None, jackknife_groups: int = 6,
                    enforce_subcritical: bool = True):
    """Conditioning on deep presence versus the martingale change of measure.

    ``event`` is a predicate on the ranked fragment masses at time s.  The
    conditional side evaluates P(event | presence in the travelling window at
    time t+s) through the tower identity: simulate to s, read the presence
    probability of each fragment's subtree off a skeleton grid at depth t/h,
    combine as 1 - prod(1 - A_j), and normalize by the unconditional presence
    probability at depth (t+s)/h.  The transform side estimates
    E[1_event M(p, s)]; the two agree in the t -> infinity limit.

    The conditional's stderr combines the path-MC error with an
    ensemble-jackknife term (the skeleton grids enter both A_j and the
    normalizer, and that uncertainty dominates the path noise).

    Returns (conditional, htransform) reports.
    """
    _check_window_exponent(d, p, enforce_subcritical)
    n_t = _integer_depth(t, h) if t > 0 else 0
    n_ts = _integer_depth(t + s, h)
    model = build_skeleton_ensemble(d, h, ensemble_size, seed=seed, workers=workers)
    f = TestFunction.indicator(alpha, beta)
    a_mag = d.dphi(p)                    # window sits at log-mass -(t+s) a_mag + [alpha, beta]
    x_den = a_mag * (t + s)

    flat, offsets, _ = sample_final_masses(d, s, n_paths, seed + 1,
                                           workers=workers,
                                           salt=rngstreams.SALT_CONDITION)
    args = x_den + flat

    masses_per_path = []
    ev = np.empty(n_paths)
    for i in range(n_paths):
        m = np.exp(np.sort(flat[offsets[i]:offsets[i + 1]])[::-1])
        masses_per_path.append(m)
        ev[i] = 1.0 if event(m) else 0.0

    def conditional_from(m: EmpiricalModel):
        hist = u_grid(m, f, n_ts, delta=delta, targets=[x_den], keep_history=True)
        u_t_field = hist[n_t]
        u_den = float(hist[n_ts].value_at(x_den))
        # A_j(t): presence probability of fragment j's subtree in the window;
        # lookups left of the window base are exact zeros (masses only decrease)
        a_vals = np.clip(u_t_field.value_at(args), 0.0, 1.0)
        miss_right = int(np.sum(args > u_t_field.hi + 1e-12))
        sure = a_vals >= 1.0               # certain presence, e.g. depth-0 fields
        terms = np.log1p(-np.where(sure, 0.0, a_vals))
        cs = np.concatenate([[0.0], np.cumsum(terms)])
        present = -np.expm1(cs[offsets[1:]] - cs[offsets[:-1]])
        cs_sure = np.concatenate([[0], np.cumsum(sure)])
        present[cs_sure[offsets[1:]] > cs_sure[offsets[:-1]]] = 1.0
        num = ev * present
        return num.mean() / u_den, num, u_den, miss_right

    est, num, u_den, miss_right = conditional_from(model)
    num_se = float(num.std(ddof=1) / math.sqrt(n_paths))

    jk_se = 0.0
    if jackknife_groups and jackknife_groups > 1:
        g = int(jackknife_groups)
        configs = [model.config(i) for i in range(model.n_configs)]
        vals = np.array([
            conditional_from(EmpiricalModel(
                [cfg for i, cfg in enumerate(configs) if i % g != j], name=model.name))[0]
            for j in range(g)])
        jk_se = math.sqrt(max((g - 1) / g * np.sum((vals - vals.mean()) ** 2), 0.0))

    conditional = EstimatorReport(
        float(est), math.hypot(num_se / u_den, jk_se), n_paths, seed,
        {"u_denominator": u_den, "mesh_h": h, "depth_t": n_t, "depth_ts": n_ts,
         "grid_miss_right": miss_right, "x_den": x_den,
         "event_rate": float(ev.mean()), "mc_stderr": num_se / u_den,
         "ensemble_stderr": jk_se, "ensemble": ensemble_size})

    mart = np.array([math.exp(s * d.phi(p)) * np.sum(m ** (p + 1.0))
                     for m in masses_per_path])
    hv = ev * mart
    htransform = EstimatorReport(
        float(hv.mean()), float(hv.std(ddof=1) / math.sqrt(n_paths)), n_paths, seed,
        {"martingale_mean": float(mart.mean()), "s": s, "p": p})
    return conditional, htransform
