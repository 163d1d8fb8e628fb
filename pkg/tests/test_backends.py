"""Both kernel backends walk the same draw sequence and agree exactly."""
import numpy as np

from presence_lab._kernels import implementations
from presence_lab.backend import active_backend


def _tree_inputs(seed, n_paths, t, log_prune):
    rng = np.random.default_rng(seed)
    cap = n_paths * 256
    return (rng.standard_exponential(cap), rng.random(cap), n_paths, t, 1.0, 0)


def test_counts_kernel_backends_agree():
    impls = implementations()["frag_counts_block"]
    assert "python" in impls
    outs = {}
    for name, fn in impls.items():
        exp_d, split_d, n_paths, t, rate, kind = _tree_inputs(7, 400, 6.0, -5.0)
        out = np.zeros(8)
        fn(exp_d, split_d, n_paths, t, rate, kind, -1.75, -0.75, -5.0,
           np.empty(4096), np.empty(4096), out)
        assert out[0] == 1.0
        outs[name] = out
    ref = outs["python"]
    for name, out in outs.items():
        np.testing.assert_array_equal(out, ref, err_msg=name)


def test_masses_kernel_backends_agree():
    impls = implementations()["frag_masses_block"]
    outs = {}
    for name, fn in impls.items():
        exp_d, split_d, n_paths, t, rate, kind = _tree_inputs(8, 200, 3.0, -np.inf)
        flat = np.empty(len(exp_d) + n_paths)
        offsets = np.zeros(n_paths + 1, dtype=np.int64)
        pruned = np.zeros(n_paths)
        out = np.zeros(8)
        fn(exp_d, split_d, n_paths, t, rate, kind, -np.inf,
           np.empty(4096), np.empty(4096), flat, offsets, pruned, out)
        assert out[0] == 1.0
        outs[name] = (flat[:offsets[-1]].copy(), offsets.copy())
    ref_flat, ref_off = outs["python"]
    for name, (flat, off) in outs.items():
        np.testing.assert_array_equal(off, ref_off, err_msg=name)
        np.testing.assert_array_equal(flat, ref_flat, err_msg=name)


def test_emp_u_step_backends_agree():
    impls = implementations()["emp_u_step"]
    rng = np.random.default_rng(9)
    u_prev = rng.random(500) * 0.4
    npairs = 1500
    fidx = rng.integers(-60, 1, npairs).astype(np.int64)
    frac = rng.random(npairs)
    cuts = np.sort(rng.choice(np.arange(1, npairs), 599, replace=False))
    cfg_start = np.concatenate([[0], cuts, [npairs]]).astype(np.int64)
    outs = {}
    for name, fn in impls.items():
        out = np.empty(500)
        fn(u_prev, fidx, frac, cfg_start, out)
        outs[name] = out
    ref = outs["python"]
    for name, out in outs.items():
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-14, err_msg=name)


def test_backend_name_reported():
    assert active_backend() in {"numba", "python"}
