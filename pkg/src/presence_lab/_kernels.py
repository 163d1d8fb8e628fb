"""Hot inner loops: fragmentation tree walks and empirical grid steps.

Each kernel exists as a plain Python function; when the numba backend is
active the module compiles it with ``@njit(cache=True, nogil=True)``.  All
randomness is consumed from caller-supplied arrays, so both backends walk the
same draw sequence.

Status codes returned in ``out[0]``: 1 ok, -1 exponential buffer exhausted,
-2 split buffer exhausted, -3 stack overflow, -4 flat output full.  A negative
status means the caller must retry the whole block with larger buffers (the
per-block stream is recreated from its key, so retries are deterministic).
"""
from __future__ import annotations

import math

import numpy as np

from .backend import NUMBA

SPLIT_UNIFORM = 0
SPLIT_DYADIC = 1
SPLIT_BETA = 2  # split_draws carry pre-drawn Beta(a,b) variates


def _frag_counts_block(exp_draws, split_draws, n_paths, t_max, rate, kind,
                       lo, hi, log_prune, stack_lm, stack_tb, out):
    """DFS over pruned fragmentation trees; window-count statistics per path.

    Fragments evolve independently (branching property), so a depth-first
    walk with per-fragment exponential waits samples the exact process.
    """
    ei = 0
    si = 0
    ne = exp_draws.shape[0]
    ns = split_draws.shape[0]
    cap = stack_lm.shape[0]
    hits = 0.0
    csum = 0.0
    csq = 0.0
    events = 0.0
    max_err = 0.0
    for _p in range(n_paths):
        stack_lm[0] = 0.0
        stack_tb[0] = 0.0
        sp = 1
        cnt = 0.0
        live_mass = 0.0
        pruned_mass = 0.0
        while sp > 0:
            sp -= 1
            lm = stack_lm[sp]
            tb = stack_tb[sp]
            if ei >= ne:
                out[0] = -1.0
                return
            tn = tb + exp_draws[ei] / rate
            ei += 1
            if tn > t_max:
                live_mass += math.exp(lm)
                if lo <= lm <= hi:
                    cnt += 1.0
                continue
            events += 1.0
            if kind == SPLIT_DYADIC:
                s1 = 0.5
            else:
                if si >= ns:
                    out[0] = -2.0
                    return
                u = split_draws[si]
                si += 1
                s1 = u if u >= 0.5 else 1.0 - u
            s2 = 1.0 - s1
            lm1 = lm + math.log(s1)
            lm2 = lm + math.log(s2)
            if lm1 < log_prune:
                pruned_mass += math.exp(lm1)
            else:
                if sp >= cap:
                    out[0] = -3.0
                    return
                stack_lm[sp] = lm1
                stack_tb[sp] = tn
                sp += 1
            if lm2 < log_prune:
                pruned_mass += math.exp(lm2)
            else:
                if sp >= cap:
                    out[0] = -3.0
                    return
                stack_lm[sp] = lm2
                stack_tb[sp] = tn
                sp += 1
        err = abs(live_mass + pruned_mass - 1.0)
        if err > max_err:
            max_err = err
        if cnt > 0.0:
            hits += 1.0
        csum += cnt
        csq += cnt * cnt
    out[0] = 1.0
    out[1] = hits
    out[2] = csum
    out[3] = csq
    out[4] = events
    out[5] = max_err
    out[6] = float(ei)
    out[7] = float(si)


def _frag_masses_block(exp_draws, split_draws, n_paths, t_max, rate, kind,
                       log_prune, stack_lm, stack_tb,
                       flat_lm, offsets, pruned_mass_out, out):
    """Same walk as the counts kernel, but collecting final live log-masses."""
    ei = 0
    si = 0
    ne = exp_draws.shape[0]
    ns = split_draws.shape[0]
    cap = stack_lm.shape[0]
    nf = flat_lm.shape[0]
    fp = 0
    events = 0.0
    offsets[0] = 0
    for p in range(n_paths):
        stack_lm[0] = 0.0
        stack_tb[0] = 0.0
        sp = 1
        pruned_mass = 0.0
        while sp > 0:
            sp -= 1
            lm = stack_lm[sp]
            tb = stack_tb[sp]
            if ei >= ne:
                out[0] = -1.0
                return
            tn = tb + exp_draws[ei] / rate
            ei += 1
            if tn > t_max:
                if fp >= nf:
                    out[0] = -4.0
                    return
                flat_lm[fp] = lm
                fp += 1
                continue
            events += 1.0
            if kind == SPLIT_DYADIC:
                s1 = 0.5
            else:
                if si >= ns:
                    out[0] = -2.0
                    return
                u = split_draws[si]
                si += 1
                s1 = u if u >= 0.5 else 1.0 - u
            s2 = 1.0 - s1
            lm1 = lm + math.log(s1)
            lm2 = lm + math.log(s2)
            if lm1 < log_prune:
                pruned_mass += math.exp(lm1)
            else:
                if sp >= cap:
                    out[0] = -3.0
                    return
                stack_lm[sp] = lm1
                stack_tb[sp] = tn
                sp += 1
            if lm2 < log_prune:
                pruned_mass += math.exp(lm2)
            else:
                if sp >= cap:
                    out[0] = -3.0
                    return
                stack_lm[sp] = lm2
                stack_tb[sp] = tn
                sp += 1
        offsets[p + 1] = fp
        pruned_mass_out[p] = pruned_mass
    out[0] = 1.0
    out[4] = events
    out[6] = float(ei)
    out[7] = float(si)


def _emp_u_step(u_prev, fidx, frac, cfg_start, out):
    """One presence-recursion step driven by an empirical offspring ensemble.

    out[i] = 1 - mean over configs c of prod_{j in c} (1 - u_prev(x_i + z_j)),
    with u_prev read by linear interpolation and zero outside the window.
    """
    m = u_prev.shape[0]
    ncfg = cfg_start.shape[0] - 1
    n = out.shape[0]
    for i in range(n):
        acc = 0.0
        for c in range(ncfg):
            prod = 1.0
            for j in range(cfg_start[c], cfg_start[c + 1]):
                k = fidx[j] + i
                w = frac[j]
                v = 0.0
                if 0 <= k < m:
                    v += (1.0 - w) * u_prev[k]
                k1 = k + 1
                if 0 <= k1 < m:
                    v += w * u_prev[k1]
                prod *= 1.0 - v
            acc += prod
        out[i] = 1.0 - acc / ncfg


def _emp_u_step_numpy(u_prev, fidx, frac, cfg_start, out):
    """Vectorized equivalent of :func:`_emp_u_step` (fallback backend)."""
    m = u_prev.shape[0]
    n = out.shape[0]
    npairs = fidx.shape[0]
    acc = np.zeros(n)
    ncfg = cfg_start.shape[0] - 1
    # slab over cells to bound the (pairs x cells) temporaries
    slab = max(1, int(8_000_000 // max(npairs, 1)))
    for s0 in range(0, n, slab):
        s1 = min(s0 + slab, n)
        cols = np.arange(s0, s1)
        k = fidx[:, None] + cols[None, :]
        v = np.where((k >= 0) & (k < m), u_prev[np.clip(k, 0, m - 1)], 0.0)
        v *= (1.0 - frac)[:, None]
        k1 = k + 1
        v += np.where((k1 >= 0) & (k1 < m), u_prev[np.clip(k1, 0, m - 1)], 0.0) * frac[:, None]
        prods = np.multiply.reduceat(1.0 - v, cfg_start[:-1], axis=0)
        acc[s0:s1] = prods.sum(axis=0)
    out[:] = 1.0 - acc / ncfg


if NUMBA is not None:
    _jit = NUMBA.njit(cache=True, nogil=True)
    frag_counts_block = _jit(_frag_counts_block)
    frag_masses_block = _jit(_frag_masses_block)
    emp_u_step = _jit(_emp_u_step)
else:
    frag_counts_block = _frag_counts_block
    frag_masses_block = _frag_masses_block
    emp_u_step = _emp_u_step_numpy


def implementations() -> dict:
    """Both backends of each kernel, for the benchmark harness."""
    table = {
        "frag_counts_block": {"python": _frag_counts_block},
        "frag_masses_block": {"python": _frag_masses_block},
        "emp_u_step": {"python": _emp_u_step, "numpy": _emp_u_step_numpy},
    }
    if NUMBA is not None:
        table["frag_counts_block"]["numba"] = frag_counts_block
        table["frag_masses_block"]["numba"] = frag_masses_block
        table["emp_u_step"]["numba"] = emp_u_step
    return table
