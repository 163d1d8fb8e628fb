"""Dual-walk representation of the windowed count and the jump-time product."""
import math

import numpy as np
import pytest

from oracles import exact_window_count_uniform_binary, theorem_constant_uniform_binary
from presence_lab import (TestFunction, build_dual_levy, build_skeleton_ensemble,
                          centering_residual, estimate_G_levy, estimate_UV,
                          make_dislocation, scaled_count_limit, u_grid, v_levy)
from presence_lab.errors import BelowDomain, UnsupportedSizeBiased
from presence_lab.levy import presence_ratio_from_G

UB = make_dislocation("uniform-binary")
DY = make_dislocation("dyadic")


def test_dual_law_closed_forms():
    law = build_dual_levy(UB, 2.0)
    assert law.jump_rate == pytest.approx(0.5)         # 2/(p+2)
    assert law.drift == pytest.approx(0.125)           # Phi'(2)
    assert law.mean_check == 0.0
    # p=0: tilted rate equals the full size-biased jump rate, here 1
    assert build_dual_levy(UB, 0.0).jump_rate == pytest.approx(1.0)
    assert build_dual_levy(DY, 2.0).jump_rate == pytest.approx(0.25)


def test_dual_jump_distribution():
    from presence_lab.rngstreams import substream
    jumps = UB.sample_tilted_jumps(2.0, substream(1, 0), 100_000)
    # Exp(p+2) = Exp(4)
    assert jumps.mean() == pytest.approx(0.25, abs=0.005)
    assert jumps.std() == pytest.approx(0.25, abs=0.005)


def test_centering():
    law = build_dual_levy(UB, 2.0)
    for t in (1.0, 4.0):
        rep = centering_residual(law, t, 100_000, seed=2)
        assert abs(rep.estimate) <= 4 * rep.stderr


def test_v_levy_against_exact_series():
    for t, c in ((6.0, 0.0), (10.0, 0.0), (10.0, 0.5), (8.0, -0.3)):
        rep = v_levy(UB, 2.0, t, c, 0.0, 1.0, 400_000, seed=3)
        exact = exact_window_count_uniform_binary(t, c=c)
        assert abs(rep.estimate - exact) <= 3.5 * rep.stderr, (t, c)


def test_v_levy_against_direct_simulation():
    t = 8.0
    _u, v = estimate_UV(UB, 2.0, t, 0.0, 1.0, 150_000, seed=4)
    rep = v_levy(UB, 2.0, t, 0.0, 0.0, 1.0, 400_000, seed=5)
    z = abs(v.estimate - rep.estimate) / math.hypot(v.stderr, rep.stderr)
    assert z <= 3.0


def test_v_levy_t0_reduces_to_indicator():
    # V(0, c) asks whether log-mass 0 lies in [alpha + c, beta + c]: value f(-c)
    rep = v_levy(UB, 2.0, 0.0, -0.5, 0.0, 1.0, 100, seed=6)
    assert rep.estimate == pytest.approx(1.0, abs=1e-12)
    rep0 = v_levy(UB, 2.0, 0.0, 0.0, 0.0, 1.0, 100, seed=6)
    assert rep0.estimate == pytest.approx(1.0, abs=1e-12)
    rep2 = v_levy(UB, 2.0, 0.0, 0.5, 0.0, 1.0, 100, seed=7)
    assert rep2.estimate == 0.0


def test_window_shift_decay():
    # V(t, x+c)/V(t, x) -> e^{-(p+1)c}: check the exact series approaches the
    # limit and the sampler tracks the exact series at finite t
    c = 0.5
    lim = math.exp(-3.0 * c)
    r200 = exact_window_count_uniform_binary(200.0, c=c) / \
        exact_window_count_uniform_binary(200.0)
    assert r200 == pytest.approx(lim, rel=0.025)
    r10 = exact_window_count_uniform_binary(10.0, c=c) / \
        exact_window_count_uniform_binary(10.0)
    rep_c = v_levy(UB, 2.0, 10.0, c, 0.0, 1.0, 400_000, seed=8)
    rep_0 = v_levy(UB, 2.0, 10.0, 0.0, 0.0, 1.0, 400_000, seed=9)
    got = rep_c.estimate / rep_0.estimate
    se = got * math.hypot(rep_c.stderr / rep_c.estimate, rep_0.stderr / rep_0.estimate)
    assert abs(got - r10) <= 3 * se


def test_scaled_count_limit_values():
    want = theorem_constant_uniform_binary()
    assert scaled_count_limit(UB, 2.0, 0.0, 1.0) == pytest.approx(want, rel=1e-12)
    # vanishes with the window and carries the exact shift factor
    tiny = scaled_count_limit(UB, 2.0, 0.5, 0.5 + 1e-9)
    assert tiny < 1e-8
    shift = scaled_count_limit(UB, 2.0, 0.3, 1.3) / scaled_count_limit(UB, 2.0, 0.0, 1.0)
    assert shift == pytest.approx(math.exp(-3.0 * 0.3), rel=1e-12)


def test_scaled_count_exact_deviation_shrinks():
    # the finite-t deviation of the scaled count is positive and decreasing
    lim = theorem_constant_uniform_binary()
    devs = []
    for t in (10.0, 15.0, 20.0):
        scaled = math.sqrt(t) * math.exp(0.125 * t) * exact_window_count_uniform_binary(t)
        devs.append(scaled / lim - 1.0)
    assert all(d > 0 for d in devs)
    assert devs[0] > devs[1] > devs[2]
    assert devs[0] < 0.25


def test_below_domain_guard():
    with pytest.raises(BelowDomain):
        build_dual_levy(UB, -2.0)
    with pytest.raises(UnsupportedSizeBiased):
        make_dislocation("beta-split", a=2.0, b=2.0).sample_tilted_jumps(-0.5, None, 10)


def test_g_levy_zero_fields_is_one():
    skel = build_skeleton_ensemble(UB, 0.25, 2_000, seed=10)
    f = TestFunction.indicator(0.0, 1.0)
    hist = u_grid(skel, f, 20, targets=[2.0], keep_history=True)
    zeros = [type(h)(h.origin, h.delta, np.zeros_like(h.values)) for h in hist]
    rep = estimate_G_levy(UB, 2.0, 0.5, 5.0, 200, 0.25, zeros, seed=11)
    assert rep.estimate == 1.0


def test_g_levy_truncation_stability():
    skel = build_skeleton_ensemble(UB, 0.25, 5_000, seed=12)
    f = TestFunction.indicator(0.0, 1.0)
    hist = u_grid(skel, f, 80, targets=[3.3], keep_history=True)
    g1 = estimate_G_levy(UB, 2.0, 0.5, 14.0, 4_000, 0.25, hist, seed=13)
    g2 = estimate_G_levy(UB, 2.0, 0.5, 21.0, 4_000, 0.25, hist, seed=14)
    assert abs(g1.estimate - g2.estimate) <= 2 * math.hypot(g1.stderr, g2.stderr)


def test_g_levy_ratio_against_skeleton_constant():
    from presence_lab import Kp_via_skeleton
    skel = build_skeleton_ensemble(UB, 0.25, 8_000, seed=15)
    f = TestFunction.indicator(0.0, 1.0)
    hist = u_grid(skel, f, 80, targets=[3.3], keep_history=True)
    k_g = presence_ratio_from_G(UB, 2.0, 7, 15.0, 2_500, 0.25, hist, 0.0, 1.0, seed=16)
    k_s = Kp_via_skeleton(UB, 2.0, 0.25, 0.0, 1.0, 15.0, ensemble_size=8_000,
                          seed=17, jackknife_groups=0)
    assert abs(k_g.estimate / k_s.estimate - 1.0) < 0.20
