"""Acceptance criteria: one callable per criterion, each returning a result
with a single pass/fail verdict at its pinned tolerance.

Criterion 11 (conditioning-limit) pins t=12 with a 10% tolerance; the
measured intrinsic deviation of the conditional from the transform limit at
t=12 is about -11% (it decays roughly like -1.3/t and passes from t=16 on),
so that check is expected to run red; its detail string carries the evidence.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import rngstreams
from .analytic import Spectrum, skeleton_spectrum_residual
from .brw import estimate_K, lclt_limit, u_grid, u_palm_representation, v_grid, v_tilted
from .conditioning import Kp_via_skeleton, conditioned_law
from .frag import build_skeleton_ensemble, make_dislocation, \
    martingale_mean, martingale_value, simulate_fragmentation
from .grids import TestFunction
from .levy import scaled_count_limit, v_levy
from .offspring import make_offspring
from .reporting import dump_json

DEFAULT_SEED = 20260810

SUITES = {
    "analytic": (2, 3),
    "brw": (1, 4, 5, 6),
    "frag": (7, 8, 9, 10, 11),
    "full": tuple(range(1, 13)),
}


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.cid:2d} {self.name}: {self.detail}"

    def to_dict(self) -> dict:
        # runtime intentionally excluded: reports must be byte-stable
        return {"cid": self.cid, "name": self.name, "passed": self.passed,
                "detail": self.detail,
                "values": {k: _num(v) for k, v in sorted(self.values.items())}}


def _num(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def criterion_1_gw_closed_form(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """Linear-fractional family: u_n(0) = 1/(2^{n+1}-1), v_n(0) = 2^{-n}."""
    model = make_offspring("geometric-origin")
    delta = 0.01
    f = TestFunction.step(-delta / 2, delta, [1.0])
    max_u = max_v = 0.0
    for n in range(1, 31):
        u0 = float(u_grid(model, f, n, delta=delta).value_at(0.0))
        v0 = float(v_grid(model, f, n, delta=delta).value_at(0.0))
        max_u = max(max_u, abs(u0 - 1.0 / (2 ** (n + 1) - 1)))
        max_v = max(max_v, abs(v0 - 2.0 ** -n))
    u30 = float(u_grid(model, f, 30, delta=delta).value_at(0.0))
    v30 = float(v_grid(model, f, 30, delta=delta).value_at(0.0))
    ratio_err = abs(u30 / v30 - 2.0 ** 30 / (2 ** 31 - 1))
    ok = max_u < 1e-9 and max_v < 1e-9 and ratio_err < 1e-8
    return CriterionResult(1, "gw-closed-form", ok,
                           f"max|u err|={max_u:.2e}, max|v err|={max_v:.2e}, "
                           f"ratio err={ratio_err:.2e} (limit 1/2)",
                           {"max_u_err": max_u, "max_v_err": max_v,
                            "ratio_err": ratio_err})


def criterion_2_legendre_duality(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """|Lambda*(Lambda'(theta)) + Lambda(theta) - theta Lambda'(theta)| < 1e-8."""
    worst = 0.0
    for name, lo, hi in (("gaussian-2", -3.0, 3.0), ("binary-pm1", -2.5, 2.5)):
        spec = Spectrum(make_offspring(name))
        for theta in np.linspace(lo, hi, 50):
            theta = float(theta)
            a = spec.dlambda(theta)
            theta_a, lstar = spec.rate_function(a)
            resid = abs(lstar + spec.cumulant(theta) - theta * a)
            worst = max(worst, float(resid))
    ok = bool(worst < 1e-8)
    return CriterionResult(2, "legendre-duality", ok,
                           f"max residual {worst:.2e} over 2x50 tilt points",
                           {"max_residual": worst})


def criterion_3_tilted_centering(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """Tilted steps are centered: |mean| <= 4 sigma / sqrt(N), N = 1e5."""
    n = 100_000
    parts = []
    ok = True
    law = Spectrum(make_offspring("gaussian-2")).tilt(2.0)
    rng = rngstreams.substream(seed, rngstreams.SALT_GENERIC, 1)
    mean = float(np.mean(law.sample(rng, n)))
    bound = 4.0 * math.sqrt(law.sigma2 / n)
    ok &= abs(mean) <= bound
    parts.append(f"gaussian-2 th=2: |{mean:+.5f}| <= {bound:.5f}")

    skel = build_skeleton_ensemble(make_dislocation("uniform-binary"), 0.5, 10_000,
                                   seed=seed, workers=workers)
    law2 = Spectrum(skel).tilt(3.0)
    rng = rngstreams.substream(seed, rngstreams.SALT_GENERIC, 2)
    mean2 = float(np.mean(law2.sample(rng, n)))
    bound2 = 4.0 * math.sqrt(law2.sigma2 / n)
    ok &= abs(mean2) <= bound2
    parts.append(f"skeleton(h=0.5) th=3: |{mean2:+.5f}| <= {bound2:.5f}")
    return CriterionResult(3, "tilted-centering", bool(ok), "; ".join(parts),
                           {"gaussian_mean": mean, "skeleton_mean": mean2})


def criterion_4_lclt_scaling(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """sigma sqrt(2 pi n) x tilted count estimate -> window integral, 2% at n=50."""
    model = make_offspring("gaussian-2")
    f = TestFunction.indicator(0.0, 1.0)
    theta, n = 2.0, 50
    rep = v_tilted(model, f, n, theta, 0.0, 1_000_000, seed=seed, workers=workers)
    sigma = math.sqrt(rep.diagnostics["sigma2"])
    scaled = sigma * math.sqrt(2 * math.pi * n) * rep.estimate
    target = lclt_limit(theta, f, 0.0)
    rel = abs(scaled / target - 1.0)
    ok = rel <= 0.02
    return CriterionResult(4, "lclt-scaling", ok,
                           f"scaled={scaled:.5f}, target={target:.5f}, rel dev "
                           f"{rel * 100:.2f}% (tol 2%)",
                           {"scaled": scaled, "target": target, "rel_dev": rel})


def criterion_5_palm_representation(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """Palm product estimator matches the grid recursion within 3 stderr."""
    model = make_offspring("gaussian-2")
    f = TestFunction.indicator(0.0, 1.0)
    theta = 2.0
    spec = Spectrum(model)
    a = spec.dlambda(theta)
    _, lstar = spec.rate_function(a)
    parts, ok = [], True
    for n in (1, 2, 3, 5):
        hist = u_grid(model, f, n, keep_history=True)
        grid_val = float(hist[n].value_at(-a * n)) * math.exp(n * lstar)
        rep = u_palm_representation(model, f, n, theta, 0.0, 100_000,
                                    seed=seed + n, workers=workers, u_fields=hist)
        z = (rep.estimate - grid_val) / rep.stderr
        ok &= abs(z) <= 3.0
        parts.append(f"n={n}: z={z:+.2f}")
    return CriterionResult(5, "palm-representation", bool(ok),
                           "; ".join(parts) + " (tol 3 stderr)", {})


def criterion_6_ratio_constant(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """K from the truncated product quadrature vs the depth-40 grid ratio."""
    model = make_offspring("gaussian-2")
    f = TestFunction.indicator(0.0, 1.0)
    theta, n_deep = 2.0, 40
    spec = Spectrum(model)
    a = spec.dlambda(theta)
    x = -a * n_deep
    u40 = float(u_grid(model, f, n_deep, targets=[x]).value_at(x))
    v40 = float(v_grid(model, f, n_deep, targets=[x]).value_at(x))
    ratio = u40 / v40
    k1 = estimate_K(model, f, theta, r_max=30, n_walks=30_000, seed=seed, workers=workers)
    k2 = estimate_K(model, f.shifted(0.3), theta, r_max=30, n_walks=30_000,
                    seed=seed + 1, workers=workers)
    rel = abs(k1.estimate / ratio - 1.0)
    zshift = abs(k1.estimate - k2.estimate) / math.hypot(k1.stderr, k2.stderr)
    ok = rel <= 0.10 and zshift <= 2.0
    return CriterionResult(
        6, "ratio-constant-consistency", ok,
        f"K={k1.estimate:.5f} vs grid ratio {ratio:.5f} (dev {rel * 100:.2f}%, tol 10%); "
        f"shift z={zshift:.2f} (tol 2)",
        {"k": k1.estimate, "grid_ratio": ratio, "shift_z": zshift})


def criterion_7_fragmentation_moments(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """e^{t Phi(p)} E sum X_i^{p+1} = 1 within 3 stderr; conservation exact."""
    d = make_dislocation("uniform-binary")
    parts, ok = [], True
    for p in (0.5, 1.0, 2.0):
        rep = martingale_mean(d, p, 3.0, 10_000, seed=seed + int(10 * p), workers=workers)
        z = (rep.estimate - 1.0) / rep.stderr
        ok &= abs(z) <= 3.0
        parts.append(f"p={p}: z={z:+.2f}")
    st = simulate_fragmentation(d, 3.0, seed=seed)
    m0 = martingale_value(d, 0.0, st)
    conservation = abs(m0 - 1.0)
    ok &= conservation <= 1e-12
    parts.append(f"M(0,3) err={conservation:.1e}")
    return CriterionResult(7, "fragmentation-moments", bool(ok), "; ".join(parts), {})


def criterion_8_skeleton_identity(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """log E Zhat_h(p+1) = -h Phi(p) within 3 stderr."""
    d = make_dislocation("uniform-binary")
    parts, ok = [], True
    for h, p in ((0.25, 1.0), (0.5, 2.0)):
        rep = skeleton_spectrum_residual(d, h, p + 1.0, 10_000,
                                         seed=seed + int(100 * h), workers=workers)
        z = rep.estimate / rep.stderr
        ok &= abs(z) <= 3.0
        parts.append(f"(h={h},p={p}): z={z:+.2f}")
    return CriterionResult(8, "skeleton-identity", bool(ok),
                           "; ".join(parts) + " (tol 3 stderr)", {})


def criterion_9_scaled_count(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """sqrt(t) e^{-t((p+1)Phi'-Phi)} V(t) vs the limit constant; 25%, shrinking."""
    from .frag import estimate_UV
    d = make_dislocation("uniform-binary")
    p, alpha, beta = 2.0, 0.0, 1.0
    limit = scaled_count_limit(d, p, alpha, beta)
    growth = (p + 1.0) * d.dphi(p) - d.phi(p)       # = -0.125 here
    runs = {10.0: 400_000, 15.0: 800_000, 20.0: 1_600_000}
    devs, ses, parts, ok = [], [], [], True
    for t, n_runs in runs.items():
        _u, v = estimate_UV(d, p, t, alpha, beta, n_runs, seed=seed + int(t),
                            workers=workers)
        scale = math.sqrt(t) * math.exp(-growth * t)
        dev = scale * v.estimate / limit - 1.0
        se = scale * v.stderr / limit
        ok &= abs(dev) <= 0.25
        devs.append(dev)
        ses.append(se)
        parts.append(f"t={t:g}: dev={dev * 100:+.2f}%+-{se * 100:.2f}%")
        if t == 20.0:
            vl = v_levy(d, p, t, 0.0, alpha, beta, 1_000_000, seed=seed, workers=workers)
            zx = (v.estimate - vl.estimate) / math.hypot(v.stderr, vl.stderr)
            ok &= abs(zx) <= 3.0
            parts.append(f"dual-walk cross-check z={zx:+.2f}")
    # non-increasing |dev| up to twice the combined MC error
    for i in range(len(devs) - 1):
        ok &= abs(devs[i + 1]) <= abs(devs[i]) + 2.0 * (ses[i] + ses[i + 1])
    return CriterionResult(9, "scaled-count-convergence", bool(ok),
                           "; ".join(parts) + " (tol 25%, non-increasing)",
                           {"devs": [float(x) for x in devs]})


def criterion_10_mesh_invariance(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """Skeleton ratio constant agrees across meshes at matched total time."""
    d = make_dislocation("uniform-binary")
    k1 = Kp_via_skeleton(d, 2.0, 0.25, 0.0, 1.0, 15.0, ensemble_size=10_000,
                         seed=seed, workers=workers)
    k2 = Kp_via_skeleton(d, 2.0, 0.5, 0.0, 1.0, 15.0, ensemble_size=10_000,
                         seed=seed + 1, workers=workers)
    mid = 0.5 * (k1.estimate + k2.estimate)
    rel = abs(k1.estimate - k2.estimate) / mid
    inside = 0.0 < k1.estimate < 1.0 and 0.0 < k2.estimate < 1.0
    ok = rel <= 0.15 and inside
    return CriterionResult(
        10, "mesh-invariance", ok,
        f"K(h=0.25)={k1.estimate:.4f}, K(h=0.5)={k2.estimate:.4f}, "
        f"gap {rel * 100:.2f}% (tol 15%), in (0,1): {inside}",
        {"k_quarter": k1.estimate, "k_half": k2.estimate, "rel_gap": rel})


def criterion_11_conditioning_limit(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """Conditioning on deep presence at t=12 vs the martingale transform, 10%.

    The estimator is exact for the finite-t conditional probability; the
    residual against the transform is the conditioning limit's own
    convergence term, measured at about -11% for this event at t=12 (passes
    from t~16 on), so the pinned tolerance is expected to run red.  The
    trivial-event identity is the hard sub-check.
    """
    d = make_dislocation("uniform-binary")
    event = lambda m: m[0] <= 0.7
    cond, ht = conditioned_law(d, 2.0, 1.0, 12.0, event, 0.0, 1.0, h=0.25,
                               ensemble_size=80_000, n_paths=200_000,
                               seed=seed, workers=workers, jackknife_groups=12)
    rel = abs(cond.estimate / ht.estimate - 1.0)
    cond1, ht1 = conditioned_law(d, 2.0, 1.0, 12.0, lambda m: True, 0.0, 1.0,
                                 h=0.25, ensemble_size=80_000, n_paths=200_000,
                                 seed=seed + 1, workers=workers,
                                 jackknife_groups=12)
    z_triv = abs(cond1.estimate - 1.0) / cond1.stderr
    z_ht = abs(ht1.estimate - 1.0) / ht1.stderr
    ok = rel <= 0.10 and z_triv <= 3.0 and z_ht <= 3.0
    return CriterionResult(
        11, "conditioning-limit", ok,
        f"conditional={cond.estimate:.5f}, transform={ht.estimate:.5f}, "
        f"dev {rel * 100:.2f}% (tol 10%; converges ~ -1.3/t, red expected at t=12); "
        f"trivial z={z_triv:.2f}/{z_ht:.2f} (tol 3)",
        {"conditional": cond.estimate, "htransform": ht.estimate, "rel_dev": rel})


def criterion_12_determinism(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """Reports are byte-identical across worker counts for a fixed seed."""
    def mini_suite(wk):
        model = make_offspring("gaussian-2")
        f = TestFunction.indicator(0.0, 1.0)
        d = make_dislocation("uniform-binary")
        from .frag import estimate_UV
        r1 = v_tilted(model, f, 10, 2.0, 0.0, 20_000, seed=seed, workers=wk)
        u, v = estimate_UV(d, 2.0, 6.0, 0.0, 1.0, 20_000, seed=seed, workers=wk)
        r3 = skeleton_spectrum_residual(d, 0.25, 2.0, 5_000, seed=seed, workers=wk)
        return dump_json([r.to_dict() for r in (r1, u, v, r3)])

    blob1 = mini_suite(1)
    blob4 = mini_suite(4)
    ok = blob1 == blob4
    return CriterionResult(12, "determinism", ok,
                           f"workers 1 vs 4 report bytes {'identical' if ok else 'DIFFER'} "
                           f"({len(blob1)} bytes)", {})


CRITERIA = {
    1: criterion_1_gw_closed_form,
    2: criterion_2_legendre_duality,
    3: criterion_3_tilted_centering,
    4: criterion_4_lclt_scaling,
    5: criterion_5_palm_representation,
    6: criterion_6_ratio_constant,
    7: criterion_7_fragmentation_moments,
    8: criterion_8_skeleton_identity,
    9: criterion_9_scaled_count,
    10: criterion_10_mesh_invariance,
    11: criterion_11_conditioning_limit,
    12: criterion_12_determinism,
}


def run_criterion(cid: int, seed: int = DEFAULT_SEED, workers=None) -> CriterionResult:
    t0 = time.perf_counter()
    res = CRITERIA[cid](seed=seed, workers=workers)
    res.runtime_s = time.perf_counter() - t0
    return res


def run_suite(suite: str, seed: int = DEFAULT_SEED, workers=None,
              criteria=None, verbose: bool = True) -> list[CriterionResult]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    ids = list(SUITES[suite])
    if criteria:
        ids = [c for c in ids if c in set(criteria)]
    results = []
    for cid in ids:
        res = run_criterion(cid, seed=seed, workers=workers)
        results.append(res)
        if verbose:
            print(res.line(), flush=True)
    return results
