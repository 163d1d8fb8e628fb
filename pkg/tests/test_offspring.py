"""Offspring samplers, Palm kernels, and the empirical cumulant."""
import math

import numpy as np
import pytest

from oracles import enumerate_disintegration_sides
from presence_lab import (EmpiricalModel, empirical_cumulant, make_dislocation,
                          make_offspring, sample_offspring, sample_palm)
from presence_lab.errors import UnsupportedPalm, XNotInSupport
from presence_lab.frag import build_skeleton_ensemble
from presence_lab.offspring import (AtomSetModel, FixedMultiplicity,
                                    GeometricMultiplicity, IIDDisplacementModel,
                                    PointDisplacement, PoissonMultiplicity,
                                    TableMultiplicity)
from presence_lab.rngstreams import substream


def test_sample_gaussian2_two_points():
    m = make_offspring("gaussian-2")
    rng = substream(1, 0)
    draws = np.array([sample_offspring(m, rng) for _ in range(5000)], dtype=object)
    assert all(len(c) == 2 for c in draws)
    flat = np.concatenate(list(draws))
    assert abs(flat.mean()) < 4 / math.sqrt(len(flat))
    assert flat.std() == pytest.approx(1.0, abs=0.02)


def test_sample_geometric_origin_mean_multiplicity():
    m = make_offspring("geometric-origin")
    rng = substream(2, 0)
    counts = np.array([len(sample_offspring(m, rng)) for _ in range(100_000)])
    se = counts.std() / math.sqrt(len(counts))
    assert abs(counts.mean() - 0.5) <= 4 * se


def test_sample_binary_deterministic():
    m = make_offspring("binary-pm1")
    cfg = sample_offspring(m, substream(3, 0))
    assert sorted(cfg) == [-1.0, 1.0]


def test_palm_gaussian2_single_point():
    m = make_offspring("gaussian-2")
    rng = substream(4, 0)
    draws = [sample_palm(m, 0.7, rng) for _ in range(2000)]
    assert all(len(c) == 1 for c in draws)
    flat = np.concatenate(draws)
    assert abs(flat.mean()) < 4 / math.sqrt(len(flat))


def test_palm_poisson_slivnyak():
    # size-biased-minus-one of a Poisson count is the same Poisson count
    m = make_offspring("poisson-gaussian", lam=2.0)
    rng = substream(5, 0)
    n = 100_000
    palm_counts = np.array([len(m.palm_sample(0.0, rng)) for _ in range(n)])
    plain_counts = np.array([len(m.sample(rng)) for _ in range(n)])
    assert abs(palm_counts.mean() - plain_counts.mean()) < 4 * math.sqrt(4.0 / n)
    for k in range(6):
        p1 = np.mean(palm_counts == k)
        p2 = np.mean(plain_counts == k)
        assert abs(p1 - p2) < 4 * math.sqrt(0.25 / n) + 0.004


def test_palm_geometric_histogram():
    # P(k) proportional to (k+1) P(N = k+1) for N geometric(1/3)
    m = make_offspring("geometric-origin")
    rng = substream(6, 0)
    n = 100_000
    counts = np.array([len(m.palm_sample(0.0, rng)) for _ in range(n)])
    q = 1.0 / 3.0
    for k in range(7):
        want = (k + 1) * (1 - q) ** 2 * q ** k
        got = np.mean(counts == k)
        assert abs(got - want) < 4 * math.sqrt(want * (1 - want) / n) + 1e-4


def test_palm_multiplicity_mean_identity():
    # mean of the Palm multiplicity equals E[N(N-1)] / E[N]
    for law in (GeometricMultiplicity(1 / 3), PoissonMultiplicity(2.0),
                TableMultiplicity({0: 0.2, 1: 0.3, 2: 0.1, 5: 0.4})):
        sb = law.size_biased_minus_one()
        ks, ps = sb.pmf_table(200)
        mean_palm = float(np.dot(ks, ps) / ps.sum())
        want = law.factorial_moment2() / law.mean()
        assert mean_palm == pytest.approx(want, rel=1e-9)


def test_palm_disintegration_enumeration_atom_set():
    model = AtomSetModel([(0.55, np.array([-1.0, 1.0])),
                          (0.30, np.array([0.5])),
                          (0.15, np.array([-1.0, 0.5, 0.5, 2.0]))],
                         name="mix", allow_subcritical=True)

    def test_fn(x, rest):
        return math.cos(x) + sum(math.exp(-abs(r)) for r in rest)

    lhs, rhs = enumerate_disintegration_sides(
        model.config_mixture(), model._palm_mixture, test_fn)
    assert abs(lhs - rhs) < 1e-12


def test_palm_disintegration_enumeration_bounded_multiplicity():
    law = TableMultiplicity({0: 0.3, 1: 0.25, 2: 0.25, 3: 0.1, 6: 0.1})
    model = IIDDisplacementModel(law, PointDisplacement(0.0), name="table-origin",
                                 allow_subcritical=True)
    sb = law.size_biased_minus_one()
    sks, sps = sb.pmf_table(20)

    def palm_mixture(x):
        return [(p, np.zeros(int(k))) for k, p in zip(sks, sps)]

    def test_fn(x, rest):
        return 1.0 / (1.0 + len(rest))

    lhs, rhs = enumerate_disintegration_sides(
        model.config_mixture(), palm_mixture, test_fn)
    assert abs(lhs - rhs) < 1e-12


def test_palm_unsupported_and_bad_atom():
    skel = build_skeleton_ensemble(make_dislocation("uniform-binary"), 0.5, 200, seed=1)
    with pytest.raises(UnsupportedPalm):
        skel.palm_sample(0.0, substream(7, 0))
    # opt-in approximate kernel works
    cfg = skel.palm_sample(-0.2, substream(7, 0), approximate=True)
    assert isinstance(cfg, np.ndarray)
    with pytest.raises(XNotInSupport):
        make_offspring("binary-pm1").palm_sample(0.123, substream(8, 0))


def test_empirical_cumulant_gaussian():
    m = make_offspring("gaussian-2")
    rep = empirical_cumulant(m, 1.0, 100_000, seed=9)
    assert abs(rep.estimate - (math.log(2) + 0.5)) <= 3 * rep.stderr


def test_empirical_cumulant_theta0_mean_multiplicity():
    m = make_offspring("geometric-origin")
    rep = empirical_cumulant(m, 0.0, 50_000, seed=10)
    assert abs(rep.estimate - math.log(0.5)) <= 3 * rep.stderr


def test_empirical_cumulant_skeleton_identity():
    d = make_dislocation("uniform-binary")
    skel = build_skeleton_ensemble(d, 0.5, 10_000, seed=11)
    rep = empirical_cumulant(skel, 2.0, 100_000, seed=12)
    assert abs(rep.estimate - (-1.0 / 6.0)) <= 3 * rep.stderr + 0.01


def test_empirical_cumulant_ci_shrinks():
    m = make_offspring("gaussian-2")
    errs = []
    for n in (1_000, 10_000, 100_000):
        rep = empirical_cumulant(m, 1.0, n, seed=13)
        errs.append(rep.stderr)
    assert errs[0] > errs[1] > errs[2]


def test_fixed_multiplicity_zero_palm_unsupported():
    law = FixedMultiplicity(0)
    with pytest.raises(UnsupportedPalm):
        law.size_biased_minus_one()


def test_ensemble_csv_roundtrip(tmp_path):
    skel = build_skeleton_ensemble(make_dislocation("uniform-binary"), 0.5, 500, seed=14)
    path = tmp_path / "ens.csv"
    skel.save_csv(path)
    back = EmpiricalModel.load_csv(path, name="skeleton")
    assert back.n_configs == skel.n_configs
    assert np.array_equal(back.offsets, skel.offsets)
    np.testing.assert_allclose(back.flat, skel.flat, rtol=0, atol=1e-16)


def test_survival_transform_matches_pgf():
    # 1 - pgf(1 - s) against direct enumeration, all families
    laws = [FixedMultiplicity(3), PoissonMultiplicity(1.7),
            GeometricMultiplicity(0.4), TableMultiplicity({0: 0.5, 2: 0.25, 7: 0.25})]
    s = np.array([0.0, 1e-12, 1e-5, 0.3, 0.99, 1.0])
    for law in laws:
        ks, ps = law.pmf_table(400)
        direct = np.array([np.dot(ps, 1.0 - (1.0 - si) ** ks) for si in s])
        got = np.asarray(law.survival_transform(s), dtype=float)
        np.testing.assert_allclose(got, direct, rtol=1e-10, atol=1e-15)
