"""Fragmentation simulation, windowed counts, martingale, skeletons."""
import math

import numpy as np
import pytest

from oracles import exact_window_count_uniform_binary
from presence_lab import (FragSpectrum, build_skeleton_ensemble, estimate_UV,
                          make_dislocation, martingale_mean, martingale_value,
                          sample_final_masses, simulate_fragmentation)
from presence_lab.errors import (BelowDomain, GeometricModel, NotSubcritical,
                                 PruningBias)
from presence_lab.frag import require_non_geometric

UB = make_dislocation("uniform-binary")
DY = make_dislocation("dyadic")


def test_split_samples_ranked_and_conservative():
    from presence_lab.rngstreams import substream
    rng = substream(1, 0)
    for d in (UB, DY, make_dislocation("beta-split", a=2.0, b=2.0)):
        for _ in range(200):
            parts = d.split(rng)
            assert parts[0] >= parts[1] > 0
            assert abs(parts.sum() - 1.0) < 1e-12


def test_dyadic_log_masses_on_lattice():
    st = simulate_fragmentation(DY, 2.5, seed=3)
    k = st.log_masses / math.log(0.5)
    assert np.allclose(k, np.round(k), atol=1e-9)


def test_conservation_every_run():
    for seed in range(20):
        st = simulate_fragmentation(UB, 3.0, seed=seed)
        assert abs(st.total_mass() - 1.0) < 1e-9


def test_conservation_with_pruning():
    st = simulate_fragmentation(UB, 5.0, prune=-3.0, seed=5)
    assert st.pruned_mass > 0.0
    assert abs(st.total_mass() - 1.0) < 1e-9
    assert np.all(st.log_masses >= -3.0 - 1.0)   # children of live parents only


def test_ancestry_recorded():
    st = simulate_fragmentation(UB, 4.0, seed=61, record_events=True)
    ids = {fid for _, fid, _ in st.fragments}
    parents = {pid for _, _, pid in st.fragments}
    assert parents <= ids | {-1} | {e[1] for e in st.events}
    assert len(st.events) >= 1


def test_tagged_fragment_drift():
    # size-biased pick of the final masses has mean log-mass -t Phi'(0)
    from presence_lab.rngstreams import substream
    t, n = 3.0, 4000
    rng = substream(7, 0)
    picks = np.empty(n)
    flat, offsets, _ = sample_final_masses(UB, t, n, seed=7)
    for i in range(n):
        logs = flat[offsets[i]:offsets[i + 1]]
        w = np.exp(logs)
        picks[i] = rng.choice(logs, p=w / w.sum())
    want = -t * UB.dphi(0.0)
    se = picks.std(ddof=1) / math.sqrt(n)
    assert abs(picks.mean() - want) <= 3 * se


def test_estimate_uv_basics():
    u, v = estimate_UV(UB, 2.0, 6.0, 0.0, 1.0, 50_000, seed=8)
    assert u.estimate <= v.estimate
    assert v.diagnostics["max_conservation_err"] < 1e-9
    exact = exact_window_count_uniform_binary(6.0)
    assert abs(v.estimate - exact) <= 3 * v.stderr


def test_estimate_uv_narrow_window_vanishes():
    u, v = estimate_UV(UB, 2.0, 6.0, 0.49, 0.51, 20_000, seed=9)
    u2, v2 = estimate_UV(UB, 2.0, 6.0, 0.0, 1.0, 20_000, seed=9)
    assert v.estimate < v2.estimate
    assert u.estimate < u2.estimate


def test_estimate_uv_requires_subcritical():
    with pytest.raises(NotSubcritical):
        estimate_UV(UB, 1.0, 5.0, 0.0, 1.0, 100, seed=10)
    estimate_UV(UB, 1.0, 2.0, 0.0, 1.0, 100, seed=10, enforce_subcritical=False)


def test_pruned_mc_matches_unpruned():
    # pruning strictly below the window must not change the count statistics
    u1, v1 = estimate_UV(UB, 2.0, 6.0, 0.0, 1.0, 50_000, seed=11, prune_margin=2.0)
    u2, v2 = estimate_UV(UB, 2.0, 6.0, 0.0, 1.0, 50_000, seed=12, prune_margin=30.0)
    z = abs(v1.estimate - v2.estimate) / math.hypot(v1.stderr, v2.stderr)
    assert z <= 3.5
    assert v1.diagnostics["events"] < v2.diagnostics["events"]


def test_martingale_values_and_guards():
    st = simulate_fragmentation(UB, 3.0, seed=13)
    assert martingale_value(UB, 0.0, st) == pytest.approx(1.0, abs=1e-12)
    st0 = simulate_fragmentation(UB, 0.0, seed=14)
    assert martingale_value(UB, 2.0, st0) == pytest.approx(1.0, abs=1e-12)
    pruned = simulate_fragmentation(UB, 5.0, prune=-3.0, seed=15)
    with pytest.raises(PruningBias):
        martingale_value(UB, 1.0, pruned)
    val = martingale_value(UB, 1.0, pruned, allow_pruned=True)
    assert val > 0
    with pytest.raises(BelowDomain):
        martingale_value(UB, -2.5, st)


def test_martingale_mean_one():
    for p in (0.5, 1.0, 2.0):
        rep = martingale_mean(UB, p, 3.0, 10_000, seed=16 + int(2 * p))
        assert abs(rep.estimate - 1.0) <= 3 * rep.stderr


def test_martingale_two_time_regression():
    # E[M(t2) | M(t1)] = M(t1): regression slope of M2 on M1 is 1
    p, n = 1.0, 10_000
    m1 = np.empty(n)
    m2 = np.empty(n)
    for i in range(n):
        s1, s2 = simulate_fragmentation(UB, 2.0, seed=100_000 + i, snapshots=[1.0, 2.0])[:2]
        m1[i] = martingale_value(UB, p, s1)
        m2[i] = martingale_value(UB, p, s2)
    x = m1 - m1.mean()
    slope = float(np.dot(x, m2) / np.dot(x, x))
    resid = m2 - m2.mean() - slope * x
    se = math.sqrt(float(np.dot(resid, resid)) / (n - 2) / float(np.dot(x, x)))
    assert abs(slope - 1.0) <= 3.5 * se


def test_exponential_moment_identity():
    # e^{t Phi(p)} E sum X_i^{p+1} = 1; time scaling across t
    flat, offsets, _ = sample_final_masses(UB, 2.0, 20_000, seed=17)
    for p in (0.5, 2.0):
        z = np.exp((p + 1.0) * flat)
        sums = np.add.reduceat(z, offsets[:-1]) * math.exp(2.0 * UB.phi(p))
        se = sums.std(ddof=1) / math.sqrt(len(sums))
        assert abs(sums.mean() - 1.0) <= 3 * se


def test_skeleton_ensemble_properties():
    skel = build_skeleton_ensemble(UB, 0.5, 5_000, seed=18)
    assert skel.n_configs == 5_000
    assert skel.displacements_nonpositive
    counts = np.diff(skel.offsets)
    assert counts.min() >= 1
    # mean offspring count for a rate-1 binary split over h: e^h
    assert counts.mean() == pytest.approx(math.exp(0.5), abs=0.05)


def test_geometric_guard():
    with pytest.raises(GeometricModel):
        require_non_geometric(DY)
    require_non_geometric(UB)


def test_population_cap():
    from presence_lab.errors import PopulationCap
    with pytest.raises(PopulationCap):
        simulate_fragmentation(UB, 14.0, seed=19, cap=2_000)


def test_p_bar_guard_against_spurious_branch():
    # the defining equation has a second, spurious root below q = -1
    fs = FragSpectrum(UB)
    assert fs.p_bar == pytest.approx(math.sqrt(2), abs=1e-9)
    assert fs.rate_at(-1.5) > 0   # spurious-branch sign flip exists...
    assert -2.0 < -math.sqrt(2) < -1.0   # ...at -sqrt(2), outside the branch
