"""Spectral objects of the branching walk and the fragmentation.

For an offspring intensity rho, the cumulant is
``Lambda(theta) = log int e^{theta x} rho(dx)``; its Legendre transform
``Lambda*(a) = theta_a a - Lambda(theta_a)`` (with ``Lambda'(theta_a) = a``)
separates supercritical speeds (negative values) from subcritical ones
(positive values).

For a conservative dislocation measure nu, the growth exponent
``Phi(p) = int (1 - sum_i s_i^{p+1}) nu(ds)`` is the Laplace exponent of the
tagged-fragment subordinator; ``p_bar`` solves ``Phi(q) = (q+1) Phi'(q)`` on
the branch q >= -1 where that equation is monotone.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import BelowDomain, NoConvergence, SpeedOutOfRange, ThetaOutOfDomain
from .offspring import EmpiricalModel, OffspringModel, TiltedStepLaw, empirical_cumulant
from .reporting import EstimatorReport

FD_STEP = 1e-5          # relative central-difference step
CRITICAL_BAND = 1e-10   # |Lambda*| below this classifies as critical


def _central_diff(fn, x, order=1):
    h = FD_STEP * max(1.0, abs(x))
    if order == 1:
        return (fn(x + h) - fn(x - h)) / (2 * h)
    return (fn(x + h) - 2 * fn(x) + fn(x - h)) / (h * h)


def _bracket_increasing(g, x0, lo_bound, hi_bound, budget=300):
    """Sign-change bracket for an increasing g, grown geometrically from x0.

    Finite domain edges are approached by repeated halving of the remaining
    gap (the derivative of a steep cumulant blows up there, so a sign change
    appears before the edge does).
    """
    f0 = g(x0)
    if f0 == 0.0:
        return x0, x0
    step = 0.25
    x = x0
    if f0 < 0.0:
        for _ in range(budget):
            if math.isfinite(hi_bound):
                xn = x + min(step, 0.5 * (hi_bound - x))
                if xn <= x:
                    return None
            else:
                xn = x + step
            if g(xn) >= 0.0:
                return x, xn
            x = xn
            step *= 2.0
        return None
    for _ in range(budget):
        if math.isfinite(lo_bound):
            xn = x - min(step, 0.5 * (x - lo_bound))
            if xn >= x:
                return None
        else:
            xn = x - step
        if g(xn) <= 0.0:
            return xn, x
        x = xn
        step *= 2.0
    return None


class Spectrum:
    """Cumulant evaluator for an offspring model.

    eval_mode selects how the cumulant integral is computed: ``closed-form``
    (model-declared), ``quadrature`` (numeric integral over the intensity), or
    ``monte-carlo`` (sample mean of the exponential functional, in which case
    :meth:`cumulant` returns an EstimatorReport).
    """

    def __init__(self, model: OffspringModel, eval_mode: str = "closed-form",
                 mc_n: int = 100_000, mc_seed: int = 0):
        if eval_mode not in {"closed-form", "quadrature", "monte-carlo"}:
            raise ValueError(f"unknown eval_mode {eval_mode!r}")
        self.model = model
        self.eval_mode = eval_mode
        self.mc_n = int(mc_n)
        self.mc_seed = int(mc_seed)

    @property
    def theta_domain(self):
        return self.model.theta_domain

    # --- Lambda and derivatives ----------------------------------------------

    def cumulant(self, theta: float):
        self.model.check_theta(theta)
        if self.eval_mode == "closed-form":
            return self.model.log_mgf(theta)
        if self.eval_mode == "quadrature":
            return self._quadrature_cumulant(theta)
        return empirical_cumulant(self.model, theta, self.mc_n, seed=self.mc_seed)

    def _quadrature_cumulant(self, theta: float) -> float:
        atoms = self.model.intensity_atoms()
        if atoms is not None:
            zs = np.array([z for z, _ in atoms])
            ws = np.array([w for _, w in atoms])
            return float(logsumexp(theta * zs, b=ws))
        if isinstance(self.model, EmpiricalModel):
            return self.model.log_mgf(theta)
        lo, hi = self.model.kernel_range(1e-14)
        pad = 0.5 * (hi - lo) + 10.0 * (1.0 + abs(theta))
        val, _err = quad(lambda z: math.exp(theta * z) * self.model.intensity_density(z),
                         lo - pad, hi + pad, limit=200)
        if not math.isfinite(val) or val <= 0:
            raise ThetaOutOfDomain(f"cumulant integral diverged at theta={theta}")
        return math.log(val)

    def _lam(self, theta: float) -> float:
        v = self.cumulant(theta)
        return v.estimate if isinstance(v, EstimatorReport) else v

    def dlambda(self, theta: float) -> float:
        if self.eval_mode == "closed-form":
            return self.model.dlog_mgf(theta)
        return _central_diff(self._lam, theta, 1)

    def d2lambda(self, theta: float) -> float:
        if self.eval_mode == "closed-form":
            return self.model.d2log_mgf(theta)
        return _central_diff(self._lam, theta, 2)

    # --- Legendre transform ---------------------------------------------------

    def rate_function(self, a: float) -> tuple[float, float]:
        """Solve Lambda'(theta) = a (unique by strict convexity).

        Returns (theta_a, Lambda*(a)) with Lambda*(a) = theta_a a - Lambda(theta_a).
        """
        lo, hi = self.theta_domain

        def g(th):
            return self.dlambda(th) - a

        x0 = 0.0 if lo < 0.0 < hi else 0.5 * (max(lo, -1e3) + min(hi, 1e3))
        bracket = _bracket_increasing(g, x0, lo, hi)
        if bracket is None:
            raise SpeedOutOfRange(f"speed a={a} not attained by the cumulant derivative")
        blo, bhi = bracket
        if blo == bhi:
            theta_a = blo
        else:
            try:
                theta_a = brentq(g, blo, bhi, xtol=1e-13, rtol=8.9e-16, maxiter=200)
            except RuntimeError as exc:  # pragma: no cover
                raise NoConvergence(str(exc)) from exc
        return theta_a, theta_a * a - self._lam(theta_a)

    def classify_speed(self, a: float, zero_band: float = CRITICAL_BAND) -> str:
        _, lstar = self.rate_function(a)
        if abs(lstar) < zero_band:
            return "critical"
        return "subcritical" if lstar > 0 else "supercritical"

    def tilt(self, theta: float) -> TiltedStepLaw:
        self.model.check_theta(theta)
        return self.model.tilt(theta)


# module-level forms mirroring the operation contracts
def cumulant(spectrum: Spectrum, theta: float):
    return spectrum.cumulant(theta)


def rate_function(spectrum: Spectrum, a: float):
    return spectrum.rate_function(a)


def classify_speed(spectrum: Spectrum, a: float, zero_band: float = CRITICAL_BAND):
    return spectrum.classify_speed(a, zero_band)


def tilt(spectrum: Spectrum, theta: float):
    return spectrum.tilt(theta)


# ---------------------------------------------------------------------------
# fragmentation side


class FragSpectrum:
    """Growth exponent Phi and its critical exponents for a dislocation model."""

    def __init__(self, disloc, q_max: float = 50.0):
        self.disloc = disloc
        self.q_max = float(q_max)
        self._p_bar = None

    @property
    def p_lower(self) -> float:
        return self.disloc.p_lower

    def _check(self, p: float) -> None:
        if p <= self.p_lower:
            raise BelowDomain(f"p={p} <= lower domain edge {self.p_lower}")

    def phi(self, p: float, mode: str = "closed-form", n: int = 100_000, seed: int = 0):
        """Phi(p); ``monte-carlo`` mode averages 1 - sum s_i^{p+1} over splits."""
        self._check(p)
        if mode == "closed-form":
            return self.disloc.phi(p)
        if mode == "monte-carlo":
            from . import rngstreams
            rng = rngstreams.substream(seed, rngstreams.SALT_GENERIC, 0)
            vals = np.empty(n)
            for i in range(n):
                parts = self.disloc.split(rng)
                vals[i] = 1.0 - float(np.sum(parts ** (p + 1.0)))
            est = self.disloc.rate * vals.mean()
            se = self.disloc.rate * vals.std(ddof=1) / math.sqrt(n)
            return EstimatorReport(float(est), float(se), n, seed)
        raise ValueError(f"unknown mode {mode!r}")

    def phi_derivs(self, p: float) -> tuple[float, float]:
        self._check(p)
        d1 = getattr(self.disloc, "dphi", None)
        d2 = getattr(self.disloc, "d2phi", None)
        if d1 is not None and d2 is not None:
            return d1(p), d2(p)
        f = self.disloc.phi
        return _central_diff(f, p, 1), _central_diff(f, p, 2)

    def rate_at(self, q: float) -> float:
        """Phi(q) - (q+1) Phi'(q); plays the role of the rate function.

        Negative between -1 and p_bar, positive past p_bar; U-shaped below
        q = -1, so roots are searched on the increasing branch only.
        """
        d1, _ = self.phi_derivs(q)
        return self.disloc.phi(q) - (q + 1.0) * d1

    def critical_exponents(self) -> tuple[float, float]:
        if self._p_bar is not None:
            return self.p_lower, self._p_bar
        lo = max(self.p_lower, -1.0)
        q0 = lo + 1e-9 if math.isfinite(lo) else -1.0
        if self.rate_at(q0) >= 0.0:
            raise NoConvergence("rate function not negative at the branch start")
        q_prev, v_prev = q0, self.rate_at(q0)
        q = q0 + 0.5
        while q <= self.q_max:
            v = self.rate_at(q)
            if v >= 0.0:
                self._p_bar = brentq(self.rate_at, q_prev, q, xtol=1e-12, rtol=8.9e-16)
                return self.p_lower, self._p_bar
            q_prev, v_prev = q, v
            q = q + max(0.5, q - q0)
        raise NoConvergence(f"no sign change of the p_bar equation below q_max={self.q_max}")

    @property
    def p_bar(self) -> float:
        return self.critical_exponents()[1]


def phi(fs: FragSpectrum, p: float, **kw):
    return fs.phi(p, **kw)


def phi_derivs(fs: FragSpectrum, p: float):
    return fs.phi_derivs(p)


def critical_exponents(fs: FragSpectrum):
    return fs.critical_exponents()


def skeleton_spectrum_residual(disloc, h: float, theta: float, n: int,
                               seed: int = 0, workers: int | None = None) -> EstimatorReport:
    """Residual log E Zhat_h(theta) + h Phi(theta-1) over n skeleton samples.

    The mesh-h skeleton offspring satisfies E sum_i X_i(h)^theta =
    exp(-h Phi(theta-1)), so the residual converges to zero in distribution.
    """
    from .frag import sample_final_masses

    if h <= 0:
        raise ValueError("h must be positive")
    p = theta - 1.0
    fs = FragSpectrum(disloc)
    if p <= fs.p_lower:
        raise BelowDomain(f"theta-1={p} <= p_lower={fs.p_lower}")
    target = disloc.phi(p)

    masses, offsets, _pruned = sample_final_masses(disloc, h, n, seed, workers=workers)
    z = np.exp(theta * masses)
    sums = np.add.reduceat(z, offsets[:-1])
    mean = float(sums.mean())
    se_log = float(sums.std(ddof=1)) / (mean * math.sqrt(n))
    lam_hat = math.log(mean)
    return EstimatorReport(lam_hat + h * target, se_log, n, seed,
                           {"lambda_hat": lam_hat, "target": -h * target})
