"""Skeleton-ratio constant and the conditioning-on-presence experiment."""
import math

import numpy as np
import pytest

from presence_lab import Kp_via_skeleton, conditioned_law, make_dislocation
from presence_lab.errors import GeometricModel, NotSubcritical

UB = make_dislocation("uniform-binary")


def test_kp_in_unit_interval():
    rep = Kp_via_skeleton(UB, 2.0, 0.5, 0.0, 1.0, 10.0, ensemble_size=4_000,
                          seed=1, jackknife_groups=4)
    assert 0.0 < rep.estimate < 1.0
    assert rep.stderr > 0.0


def test_kp_mesh_invariance_small():
    k1 = Kp_via_skeleton(UB, 2.0, 0.25, 0.0, 1.0, 12.0, ensemble_size=6_000,
                         seed=2, jackknife_groups=0)
    k2 = Kp_via_skeleton(UB, 2.0, 0.5, 0.0, 1.0, 12.0, ensemble_size=6_000,
                         seed=3, jackknife_groups=0)
    assert abs(k1.estimate - k2.estimate) / (0.5 * (k1.estimate + k2.estimate)) < 0.15


def test_kp_window_shift_stability():
    k0 = Kp_via_skeleton(UB, 2.0, 0.5, 0.0, 1.0, 12.0, ensemble_size=6_000,
                         seed=4, jackknife_groups=4)
    kc = Kp_via_skeleton(UB, 2.0, 0.5, 0.0, 1.0, 12.0, ensemble_size=6_000,
                         seed=4, c=0.3, jackknife_groups=4)
    tol = 3 * math.hypot(k0.stderr, kc.stderr) + 0.05 * k0.estimate
    assert abs(k0.estimate - kc.estimate) <= tol


def test_kp_guards():
    with pytest.raises(GeometricModel):
        Kp_via_skeleton(make_dislocation("dyadic"), 2.0, 0.5, 0.0, 1.0, 10.0)
    with pytest.raises(NotSubcritical):
        Kp_via_skeleton(UB, 1.0, 0.5, 0.0, 1.0, 10.0)
    with pytest.raises(ValueError):
        Kp_via_skeleton(UB, 2.0, 0.7, 0.0, 1.0, 10.0)   # 10/0.7 not an integral mesh


def test_conditioned_trivial_event_is_one():
    cond, ht = conditioned_law(UB, 2.0, 1.0, 8.0, lambda m: True, 0.0, 1.0,
                               h=0.25, ensemble_size=10_000, n_paths=60_000, seed=5)
    assert abs(cond.estimate - 1.0) <= 3 * cond.stderr
    assert abs(ht.estimate - 1.0) <= 3 * ht.stderr


def test_conditioned_t0_degenerate_matches_direct_mc():
    # at t=0 the conditional reduces to P(event and presence) / P(presence)
    # with presence read window-exactly at time s
    from presence_lab import sample_final_masses
    d, p, s = UB, 2.0, 1.0
    alpha, beta = -1.4, -0.4     # window the s-population actually charges
    event = lambda m: m[0] <= 0.7
    x_den = d.dphi(p) * s
    cond, _ = conditioned_law(d, p, s, 0.0, event, alpha, beta, h=0.25,
                              ensemble_size=20_000, n_paths=150_000, seed=6,
                              delta=0.002, jackknife_groups=0,
                              enforce_subcritical=True)
    flat, offsets, _ = sample_final_masses(d, s, 300_000, seed=7)
    lo, hi = alpha - x_den, beta - x_den
    hits = np.zeros(len(offsets) - 1, dtype=bool)
    evs = np.zeros(len(offsets) - 1, dtype=bool)
    for i in range(len(offsets) - 1):
        logs = flat[offsets[i]:offsets[i + 1]]
        hits[i] = np.any((logs >= lo) & (logs <= hi))
        evs[i] = np.exp(logs.max()) <= 0.7
    direct = (hits & evs).mean() / hits.mean()
    se_direct = math.sqrt(direct * (1 - direct) / max(hits.sum(), 1))
    tol = 3 * math.hypot(cond.stderr, se_direct) + 0.02 * direct
    assert abs(cond.estimate - direct) <= tol


def test_conditioned_convergence_toward_transform():
    event = lambda m: m[0] <= 0.7
    devs = []
    for t in (6.0, 12.0, 24.0):
        cond, ht = conditioned_law(UB, 2.0, 1.0, t, event, 0.0, 1.0, h=0.25,
                                   ensemble_size=10_000, n_paths=60_000,
                                   seed=8, jackknife_groups=0)
        devs.append(abs(cond.estimate / ht.estimate - 1.0))
    assert devs[2] < devs[0]
    assert devs[2] < 0.05


def test_conditioned_requires_subcritical():
    with pytest.raises(NotSubcritical):
        conditioned_law(UB, 1.2, 1.0, 4.0, lambda m: True, 0.0, 1.0, n_paths=10)
