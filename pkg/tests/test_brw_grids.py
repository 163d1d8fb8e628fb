"""Exact lattice recursions: closed forms, domination, covariance, linearity."""
import numpy as np
import pytest
from scipy.stats import norm

from oracles import gw_presence_closed_form
from presence_lab import TestFunction, make_offspring, u_grid, v_grid
from presence_lab.brw import presence_frequency
from presence_lab.errors import UnsupportedModel

GAUSS = make_offspring("gaussian-2")
GEO = make_offspring("geometric-origin")
F01 = TestFunction.indicator(0.0, 1.0)
CELL = TestFunction.step(-0.005, 0.01, [1.0])


def test_v_geometric_closed_form():
    for n in (0, 1, 2, 10):
        v = v_grid(GEO, CELL, n, delta=0.01)
        assert float(v.value_at(0.0)) == pytest.approx(0.5 ** n, abs=1e-12)


def test_u_geometric_closed_form():
    for n in (1, 2, 7, 30):
        u = u_grid(GEO, CELL, n, delta=0.01)
        assert float(u.value_at(0.0)) == pytest.approx(gw_presence_closed_form(n),
                                                       abs=1e-12)


def test_n0_identity():
    v = v_grid(GAUSS, F01, 0)
    u = u_grid(GAUSS, F01, 0)
    for x in (0.1, 0.5, 0.93):
        assert float(v.value_at(x)) == pytest.approx(1.0, abs=1e-12)
        assert float(u.value_at(x)) == pytest.approx(1.0, abs=1e-12)
    assert float(v.value_at(1.7)) == 0.0


def test_v_gaussian_single_step():
    v = v_grid(GAUSS, F01, 1)
    want = 2 * (norm.cdf(1.0) - norm.cdf(0.0))
    assert float(v.value_at(0.0)) == pytest.approx(want, abs=1e-4)


def test_u_zero_window_stays_zero():
    fz = TestFunction.step(0.0, 0.02, np.zeros(50))
    u = u_grid(GAUSS, fz, 4)
    assert np.all(u.values == 0.0)


def test_domination_and_bounds():
    for model in (GAUSS, GEO, make_offspring("binary-pm1")):
        f = F01 if model is not GEO else CELL
        for n in (1, 3, 6):
            u = u_grid(model, f, n, delta=0.02 if model is not GEO else 0.01)
            v = v_grid(model, f, n, delta=0.02 if model is not GEO else 0.01)
            assert np.all(u.values <= np.minimum(v.values, 1.0) + 1e-12)
            assert np.all(u.values >= -1e-15)


def test_monotone_coupling():
    f_small = TestFunction.indicator(0.2, 0.8)
    for n in (1, 3):
        u_small = u_grid(GAUSS, f_small, n, delta=0.02)
        u_big = u_grid(GAUSS, F01, n, delta=0.02)
        vs = u_small.value_at(u_big.x())
        vb = u_big.values
        assert np.all(vs <= vb + 1e-12)


def test_shift_covariance():
    # tau_c f evaluated at x equals f evaluated at x + c, at grid resolution
    c = 0.3   # 15 cells at delta 0.02
    f_shift = F01.shifted(c)
    for n in (1, 4):
        u = u_grid(GAUSS, F01, n, delta=0.02)
        u_s = u_grid(GAUSS, f_shift, n, delta=0.02)
        xs = np.linspace(-3, 2, 40)
        np.testing.assert_allclose(u_s.value_at(xs), u.value_at(xs + c),
                                   rtol=0, atol=1e-10)


def test_v_linearity():
    f_a = TestFunction.indicator(0.0, 0.4)
    f_b = TestFunction.indicator(0.4, 1.0)
    n = 3
    va = v_grid(GAUSS, f_a, n, delta=0.02)
    vb = v_grid(GAUSS, f_b, n, delta=0.02)
    vc = v_grid(GAUSS, F01, n, delta=0.02)
    xs = np.linspace(-4, 4, 50)
    np.testing.assert_allclose(va.value_at(xs) + vb.value_at(xs), vc.value_at(xs),
                               rtol=0, atol=1e-12)


def test_u_matches_population_simulation():
    # grid presence vs brute-force tree simulation at 5 probe points
    probes = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    n = 3
    u = u_grid(GAUSS, F01, n, delta=0.02)
    freq, se = presence_frequency(GAUSS, F01, n, probes, 40_000, seed=21)
    grid_vals = u.value_at(probes)
    z = np.abs(freq - grid_vals) / np.maximum(se, 1e-12)
    assert np.all(z <= 3.5)


def test_unsupported_model_kind():
    from presence_lab.offspring import OffspringModel

    class NoStrategy(OffspringModel):
        # no multiplicity transform, no finite mixture, no ensemble
        kind = "mystery"

        def mean_offspring(self):
            return 2.0

        def intensity_atoms(self):
            return [(0.0, 2.0)]

        def kernel_range(self, tail):
            return 0.0, 0.0

    with pytest.raises(UnsupportedModel):
        u_grid(NoStrategy(), F01, 1)


def test_mass_loss_reported():
    v = v_grid(GAUSS, F01, 5)
    assert 0.0 <= v.mass_loss < 1e-6


def test_grid_csv_roundtrip(tmp_path):
    v = v_grid(GAUSS, F01, 2)
    path = tmp_path / "field.csv"
    v.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 0], v.x(), rtol=0, atol=1e-15)
    np.testing.assert_allclose(data[:, 1], v.values, rtol=0, atol=1e-15)
