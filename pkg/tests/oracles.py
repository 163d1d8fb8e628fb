"""Independent oracles: closed forms and enumerations the tests check against.

Everything here is derived from first principles, separately from the library
code paths it validates.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special


def gw_presence_closed_form(n: int) -> float:
    """Survival-by-generation of the q=1/3 geometric branching law: 1/(2^{n+1}-1)."""
    return 1.0 / (2.0 ** (n + 1) - 1.0)


def exact_window_count_uniform_binary(t: float, c: float = 0.0, p: float = 2.0,
                                      alpha: float = 0.0, beta: float = 1.0,
                                      k_max: int = 600) -> float:
    """Exact E[count of log-masses in [alpha, beta] - t Phi'(p) + c] at rate 1.

    Change of measure on the tagged-fragment subordinator: the count equals
    e^{t((p+1)a - Phi(p))} E[e^{-(p+1) w} 1{w - c in [alpha, beta]}] where
    w = a t - G, a = Phi'(p) = 2/(p+2)^2, and G is a Poisson(t lam_p) sum of
    Exp(p+2) jumps, lam_p = 2/(p+2).  Conditioning on the jump count reduces
    the expectation to regularized incomplete gamma functions; the summation
    is in k with Poisson weights.
    """
    lam_p = 2.0 / (p + 2.0)
    jump_rate = p + 2.0
    a = 2.0 / (p + 2.0) ** 2
    phi = p / (p + 2.0)
    # G must land in [A, B] for w - c in [alpha, beta]
    B = a * t - (alpha + c)
    A = a * t - (beta + c)
    if B < 0:
        return 0.0
    A = max(A, 0.0)
    lp = lam_p * t
    total = 0.0
    w0 = a * t
    if alpha + c <= w0 <= beta + c:          # zero-jump atom
        total += math.exp(-lp - (p + 1.0) * w0)
    for k in range(1, k_max):
        log_pois = -lp + k * math.log(lp) - special.gammaln(k + 1)
        # E[e^{(p+1)G} 1{G in [A,B]}] for G ~ Gamma(k, rate p+2):
        # rate shifts to jump_rate - (p+1) = 1, scale factor jump_rate^k
        shifted = special.gammainc(k, B) - special.gammainc(k, A)
        if shifted <= 0.0:
            continue
        total += math.exp(log_pois - (p + 1.0) * a * t + k * math.log(jump_rate)) * shifted
    return math.exp(t * ((p + 1.0) * a - phi)) * total


def theorem_constant_uniform_binary(p: float = 2.0, alpha: float = 0.0,
                                    beta: float = 1.0) -> float:
    """Limit of sqrt(t) e^{0.125 t} V(t) for the uniform binary split at p=2."""
    sig2 = 4.0 / (p + 2.0) ** 3
    return (2.0 * math.pi * sig2) ** -0.5 / (p + 1.0) * (
        math.exp(-(p + 1.0) * alpha) - math.exp(-(p + 1.0) * beta))


def enumerate_disintegration_sides(configs, palm_mixture_fn, test_fn, tol=1e-9):
    """Both sides of the reduced-Palm disintegration by exhaustive enumeration.

    configs: [(prob, atoms array)]; palm_mixture_fn(x) -> [(prob, remaining)]
    from the implementation under test; test_fn(x, atoms) -> float bounded.

    Left side: E sum_i F(z_i, Z - delta_{z_i}), enumerated over the mixture.
    Right side: sum over intensity atoms of weight(x) E^{!x} F(x, .).
    """
    lhs = 0.0
    for prob, atoms in configs:
        for i in range(len(atoms)):
            rest = np.delete(atoms, i)
            lhs += prob * test_fn(atoms[i], rest)

    weights: dict[float, float] = {}
    for prob, atoms in configs:
        for z in atoms:
            key = round(float(z) / tol) * tol
            weights[key] = weights.get(key, 0.0) + prob
    rhs = 0.0
    for x, w in weights.items():
        for prob, rest in palm_mixture_fn(x):
            rhs += w * prob * test_fn(x, rest)
    return lhs, rhs
