"""Offspring point processes: samplers, intensities, and reduced Palm kernels.

A model describes the displacement point process Z of one family.  Three
kinds are supported:

* ``iid-displacement`` -- random multiplicity N with i.i.d. displacements;
* ``atom-set`` -- a finite mixture of deterministic atom configurations;
* ``empirical`` -- a stored ensemble of configurations, resampled uniformly.

The reduced Palm kernel at x is the law of the configuration minus one point,
given a point at x.  For i.i.d. displacements it is (size-biased-minus-one
multiplicity) i.i.d. displacements, independent of x; for Poisson multiplicity
that law coincides with Z itself (Slivnyak); finite atom mixtures are handled
by exact enumeration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import rngstreams
from .errors import (CapExceeded, NonFiniteSample, ThetaOutOfDomain,
                     UnsupportedPalm, XNotInSupport)
from .reporting import EstimatorReport, report_from_moments

CONFIG_CAP = 2 ** 20


# ---------------------------------------------------------------------------
# multiplicity laws


class MultiplicityLaw:
    """Distribution of the number of children."""

    kind = "base"

    def mean(self) -> float:
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def survival_transform(self, s):
        """1 - pgf(1 - s), evaluated stably for tiny s (values in [0, 1])."""
        raise NotImplementedError

    def pmf_table(self, cap=64):
        """(ks, ps) covering all but a negligible tail of the law."""
        raise NotImplementedError

    def size_biased_minus_one(self) -> "MultiplicityLaw":
        """Law with P(k) proportional to (k+1) P(N = k+1)."""
        raise NotImplementedError

    def factorial_moment2(self) -> float:
        ks, ps = self.pmf_table()
        return float(np.sum(ks * (ks - 1.0) * ps))


class FixedMultiplicity(MultiplicityLaw):
    kind = "fixed"

    def __init__(self, m: int):
        if m < 0:
            raise ValueError("multiplicity must be >= 0")
        self.m = int(m)

    def mean(self):
        return float(self.m)

    def sample(self, rng, size=None):
        if size is None:
            return self.m
        return np.full(size, self.m, dtype=np.int64)

    def survival_transform(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        with np.errstate(divide="ignore"):
            return -np.expm1(self.m * np.log1p(-s))

    def pmf_table(self, cap=64):
        return np.array([self.m], dtype=float), np.array([1.0])

    def size_biased_minus_one(self):
        if self.m == 0:
            raise UnsupportedPalm("zero offspring has no Palm kernel")
        return FixedMultiplicity(self.m - 1)


class PoissonMultiplicity(MultiplicityLaw):
    kind = "poisson"

    def __init__(self, lam: float):
        if lam <= 0:
            raise ValueError("rate must be positive")
        self.lam = float(lam)

    def mean(self):
        return self.lam

    def sample(self, rng, size=None):
        return rng.poisson(self.lam, size)

    def survival_transform(self, s):
        s = np.asarray(s, dtype=float)
        return -np.expm1(-self.lam * np.clip(s, 0.0, 1.0))

    def pmf_table(self, cap=None):
        if cap is None:
            # cover to negligible tail
            cap = int(self.lam + 12 * math.sqrt(self.lam) + 20)
        ks = np.arange(cap + 1, dtype=float)
        logp = ks * math.log(self.lam) - self.lam - np.cumsum(
            np.concatenate([[0.0], np.log(np.maximum(ks[1:], 1.0))]))
        return ks, np.exp(logp)

    def size_biased_minus_one(self):
        # (k+1) P(N=k+1) ~ Poisson(lam): the kernel has the law of Z itself
        return PoissonMultiplicity(self.lam)


class GeometricMultiplicity(MultiplicityLaw):
    """P(N = k) = (1-q) q^k for k = 0, 1, 2, ..."""

    kind = "geometric"

    def __init__(self, q: float):
        if not 0.0 < q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        self.q = float(q)

    def mean(self):
        return self.q / (1.0 - self.q)

    def sample(self, rng, size=None):
        # numpy geometric counts trials (support 1, 2, ...) with p = 1-q
        return rng.geometric(1.0 - self.q, size) - 1

    def survival_transform(self, s):
        s = np.asarray(s, dtype=float)
        q = self.q
        return q * s / (1.0 - q + q * s)

    def pmf_table(self, cap=None):
        if cap is None:
            cap = max(10, int(math.ceil(-36.0 / math.log(self.q))))
        ks = np.arange(cap + 1, dtype=float)
        return ks, (1.0 - self.q) * self.q ** ks

    def size_biased_minus_one(self):
        return _NegBinomial2(self.q)


class _NegBinomial2(MultiplicityLaw):
    """P(k) = (k+1)(1-q)^2 q^k; sum of two independent geometrics."""

    kind = "negbin2"

    def __init__(self, q: float):
        self.q = float(q)

    def mean(self):
        return 2.0 * self.q / (1.0 - self.q)

    def sample(self, rng, size=None):
        g = rng.geometric(1.0 - self.q, (2,) if size is None else (2, size))
        out = g.sum(axis=0) - 2
        return int(out) if size is None else out

    def survival_transform(self, s):
        s = np.asarray(s, dtype=float)
        q = self.q
        base = (1.0 - q) / (1.0 - q + q * s)
        return 1.0 - base * base

    def pmf_table(self, cap=None):
        if cap is None:
            cap = max(10, int(math.ceil(-40.0 / math.log(self.q))))
        ks = np.arange(cap + 1, dtype=float)
        return ks, (ks + 1.0) * (1.0 - self.q) ** 2 * self.q ** ks

    def size_biased_minus_one(self):
        raise UnsupportedPalm("nested Palm kernels are not provided")


class TableMultiplicity(MultiplicityLaw):
    kind = "table"

    def __init__(self, pmf: dict[int, float]):
        ks = np.array(sorted(pmf), dtype=np.int64)
        ps = np.array([pmf[int(k)] for k in ks], dtype=float)
        if np.any(ps < 0) or abs(ps.sum() - 1.0) > 1e-12:
            raise ValueError("pmf must be nonnegative and sum to 1")
        self.ks = ks
        self.ps = ps

    def mean(self):
        return float(np.dot(self.ks, self.ps))

    def sample(self, rng, size=None):
        idx = rng.choice(len(self.ks), size=size, p=self.ps)
        return self.ks[idx]

    def survival_transform(self, s):
        s = np.atleast_1d(np.clip(np.asarray(s, dtype=float), 0.0, 1.0))
        out = np.zeros_like(s)
        with np.errstate(divide="ignore"):
            l1p = np.log1p(-s)
            for k, p in zip(self.ks, self.ps):
                if k == 0:
                    continue
                out += p * (-np.expm1(k * l1p))
        return out

    def pmf_table(self, cap=None):
        return self.ks.astype(float), self.ps.copy()

    def size_biased_minus_one(self):
        mean = self.mean()
        if mean <= 0:
            raise UnsupportedPalm("zero-mean multiplicity")
        pmf = {}
        for k, p in zip(self.ks, self.ps):
            if k >= 1:
                pmf[int(k) - 1] = k * p / mean
        return TableMultiplicity(pmf)


# ---------------------------------------------------------------------------
# displacement laws


class DisplacementLaw:
    """Law of one child displacement; carries its exponential-moment data."""

    kind = "base"
    theta_domain = (-math.inf, math.inf)

    def sample(self, rng, size=None):
        raise NotImplementedError

    def log_mgf(self, theta: float) -> float:
        raise NotImplementedError

    def dlog_mgf(self, theta: float) -> float:
        raise NotImplementedError

    def d2log_mgf(self, theta: float) -> float:
        raise NotImplementedError

    def tilted_centered_sampler(self, theta: float):
        """Sampler of (tilted displacement) - (tilted mean)."""
        raise NotImplementedError

    def density_on(self, z):
        """Density values on grid nodes, or None for purely atomic laws."""
        return None

    def atoms(self):
        """[(position, probability)] for purely atomic laws, else None."""
        return None

    def quantile_range(self, tail: float):
        raise NotImplementedError


class NormalDisplacement(DisplacementLaw):
    kind = "normal"

    def __init__(self, mu=0.0, sigma=1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.mu = float(mu)
        self.sigma = float(sigma)

    def sample(self, rng, size=None):
        return rng.normal(self.mu, self.sigma, size)

    def log_mgf(self, theta):
        return self.mu * theta + 0.5 * (self.sigma * theta) ** 2

    def dlog_mgf(self, theta):
        return self.mu + self.sigma ** 2 * theta

    def d2log_mgf(self, theta):
        return self.sigma ** 2

    def tilted_centered_sampler(self, theta):
        sigma = self.sigma
        return lambda rng, size=None: rng.normal(0.0, sigma, size)

    def density_on(self, z):
        s = self.sigma
        return np.exp(-0.5 * ((z - self.mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))

    def quantile_range(self, tail):
        from scipy.stats import norm
        half = norm.isf(tail / 2.0) * self.sigma
        return self.mu - half, self.mu + half


class PointDisplacement(DisplacementLaw):
    kind = "point"

    def __init__(self, x0=0.0):
        self.x0 = float(x0)

    def sample(self, rng, size=None):
        if size is None:
            return self.x0
        return np.full(size, self.x0)

    def log_mgf(self, theta):
        return self.x0 * theta

    def dlog_mgf(self, theta):
        return self.x0

    def d2log_mgf(self, theta):
        return 0.0

    def tilted_centered_sampler(self, theta):
        return lambda rng, size=None: (0.0 if size is None else np.zeros(size))

    def atoms(self):
        return [(self.x0, 1.0)]

    def quantile_range(self, tail):
        return self.x0, self.x0


class ExponentialDisplacement(DisplacementLaw):
    """Exp(rate) displacements; the cumulant diverges at theta = rate."""

    kind = "exponential"

    def __init__(self, rate=1.0):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self.theta_domain = (-math.inf, self.rate)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def _check(self, theta):
        if theta >= self.rate:
            raise ThetaOutOfDomain(f"theta={theta} >= rate={self.rate}")

    def log_mgf(self, theta):
        self._check(theta)
        return math.log(self.rate / (self.rate - theta))

    def dlog_mgf(self, theta):
        self._check(theta)
        return 1.0 / (self.rate - theta)

    def d2log_mgf(self, theta):
        self._check(theta)
        return 1.0 / (self.rate - theta) ** 2

    def tilted_centered_sampler(self, theta):
        self._check(theta)
        r = self.rate - theta
        return lambda rng, size=None: rng.exponential(1.0 / r, size) - 1.0 / r

    def density_on(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(z >= 0.0, self.rate * np.exp(-self.rate * np.maximum(z, 0.0)), 0.0)

    def quantile_range(self, tail):
        return 0.0, -math.log(tail / 2.0) / self.rate


# ---------------------------------------------------------------------------
# tilted step law


@dataclass
class TiltedStepLaw:
    """Centered step law of the auxiliary walk at a given tilt."""

    theta: float
    drift: float      # mean of the tilted displacement (walk speed a)
    sigma2: float     # variance of the tilted displacement
    _sampler: object

    def sample(self, rng, size=None):
        return self._sampler(rng, size)


# ---------------------------------------------------------------------------
# models


class OffspringModel:
    """Common surface shared by all offspring point-process kinds."""

    kind = "base"
    name = "model"
    theta_domain = (-math.inf, math.inf)
    palm_exact = False
    # declared: E[Zhat(theta) log^{1+eps}(1+Zhat(theta))] < infty on theta_domain
    zlog_moment_ok = False
    displacements_nonpositive = False

    def sample(self, rng) -> np.ndarray:
        raise NotImplementedError

    def mean_offspring(self) -> float:
        raise NotImplementedError

    def log_mgf(self, theta: float) -> float:
        raise NotImplementedError

    def dlog_mgf(self, theta: float) -> float:
        raise NotImplementedError

    def d2log_mgf(self, theta: float) -> float:
        raise NotImplementedError

    def check_theta(self, theta: float) -> None:
        lo, hi = self.theta_domain
        if not lo < theta < hi:
            raise ThetaOutOfDomain(f"theta={theta} outside open domain ({lo}, {hi})")

    def tilt(self, theta: float) -> TiltedStepLaw:
        raise NotImplementedError

    # --- Palm kernel -------------------------------------------------------
    def palm_sample(self, x: float, rng) -> np.ndarray:
        raise UnsupportedPalm(f"no exact Palm kernel for model kind {self.kind!r}")

    def palm_batch(self, y: np.ndarray, rng):
        """Configurations from the Palm kernel at each y.

        Returns (flat, offsets): configuration i occupies
        flat[offsets[i]:offsets[i+1]].
        """
        raise UnsupportedPalm(f"no exact Palm kernel for model kind {self.kind!r}")

    # --- grid-recursion hooks ----------------------------------------------
    def intensity_atoms(self):
        """[(z, weight)] with weights summing to the offspring mean, or None."""
        return None

    def intensity_density(self, z):
        return None

    def kernel_range(self, tail: float):
        raise NotImplementedError

    def survival_transform(self, s):
        """1 - E[(1-s)^N] for the product recursion, or None if unsupported."""
        return None

    def config_mixture(self):
        """[(prob, atoms)] for exact enumeration, or None."""
        return None

    def zhat(self, config: np.ndarray, theta: float) -> float:
        if len(config) == 0:
            return 0.0
        with np.errstate(over="ignore"):
            return float(np.exp(theta * np.asarray(config)).sum())


class IIDDisplacementModel(OffspringModel):
    kind = "iid-displacement"

    def __init__(self, multiplicity: MultiplicityLaw, displacement: DisplacementLaw,
                 name: str, allow_subcritical: bool = False, zlog_moment_ok: bool = True):
        self.multiplicity = multiplicity
        self.displacement = displacement
        self.name = name
        self.theta_domain = displacement.theta_domain
        self.palm_exact = True
        self.zlog_moment_ok = zlog_moment_ok
        if multiplicity.mean() <= 1.0 and not allow_subcritical:
            raise ValueError(
                f"offspring mean {multiplicity.mean():g} <= 1; pass allow_subcritical=True "
                "for subcritical test models")

    def sample(self, rng):
        n = int(self.multiplicity.sample(rng))
        if n > CONFIG_CAP:
            raise CapExceeded(f"configuration of {n} points exceeds cap {CONFIG_CAP}")
        return np.atleast_1d(np.asarray(self.displacement.sample(rng, n), dtype=float))

    def mean_offspring(self):
        return self.multiplicity.mean()

    def log_mgf(self, theta):
        self.check_theta(theta)
        return math.log(self.multiplicity.mean()) + self.displacement.log_mgf(theta)

    def dlog_mgf(self, theta):
        self.check_theta(theta)
        return self.displacement.dlog_mgf(theta)

    def d2log_mgf(self, theta):
        self.check_theta(theta)
        return self.displacement.d2log_mgf(theta)

    def tilt(self, theta):
        self.check_theta(theta)
        return TiltedStepLaw(theta, self.dlog_mgf(theta), self.d2log_mgf(theta),
                             self.displacement.tilted_centered_sampler(theta))

    def palm_sample(self, x, rng):
        sb = self.multiplicity.size_biased_minus_one()
        n = int(sb.sample(rng))
        return np.atleast_1d(np.asarray(self.displacement.sample(rng, n), dtype=float))

    def palm_batch(self, y, rng):
        sb = self.multiplicity.size_biased_minus_one()
        counts = np.atleast_1d(sb.sample(rng, len(y))).astype(np.int64)
        offsets = np.zeros(len(y) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        flat = np.asarray(self.displacement.sample(rng, int(offsets[-1])), dtype=float)
        return flat, offsets

    def intensity_atoms(self):
        at = self.displacement.atoms()
        if at is None:
            return None
        m = self.mean_offspring()
        return [(z, m * p) for z, p in at]

    def intensity_density(self, z):
        d = self.displacement.density_on(z)
        if d is None:
            return None
        return self.mean_offspring() * d

    def kernel_range(self, tail):
        return self.displacement.quantile_range(tail)

    def survival_transform(self, s):
        return self.multiplicity.survival_transform(s)

    def config_mixture(self):
        at = self.displacement.atoms()
        if at is None or len(at) != 1:
            return None
        x0 = at[0][0]
        ks, ps = self.multiplicity.pmf_table()
        return [(float(p), np.full(int(k), x0)) for k, p in zip(ks, ps) if p > 0]


class AtomSetModel(OffspringModel):
    """Finite mixture of deterministic displacement configurations."""

    kind = "atom-set"

    def __init__(self, configs, name: str, allow_subcritical: bool = False):
        # configs: [(prob, array-of-atoms)] or a single array for a deterministic family
        if isinstance(configs, (list, tuple)) and configs and not isinstance(configs[0], tuple):
            configs = [(1.0, np.asarray(configs, dtype=float))]
        self.configs = [(float(p), np.asarray(a, dtype=float)) for p, a in configs]
        total = sum(p for p, _ in self.configs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError("config probabilities must sum to 1")
        self.name = name
        self.palm_exact = True
        self.zlog_moment_ok = True
        self.displacements_nonpositive = all((a <= 0).all() for _, a in self.configs)
        if self.mean_offspring() <= 1.0 and not allow_subcritical:
            raise ValueError("offspring mean <= 1; pass allow_subcritical=True")

    def sample(self, rng):
        if len(self.configs) == 1:
            return self.configs[0][1].copy()
        ps = np.array([p for p, _ in self.configs])
        i = rng.choice(len(self.configs), p=ps)
        return self.configs[i][1].copy()

    def mean_offspring(self):
        return sum(p * len(a) for p, a in self.configs)

    def _pairs(self):
        """(z, prob_weight) over (config, atom) pairs."""
        zs, ws = [], []
        for p, a in self.configs:
            zs.extend(a.tolist())
            ws.extend([p] * len(a))
        return np.array(zs), np.array(ws)

    def log_mgf(self, theta):
        zs, ws = self._pairs()
        return float(logsumexp(theta * zs, b=ws))

    def dlog_mgf(self, theta):
        zs, ws = self._pairs()
        w = ws * np.exp(theta * zs - (theta * zs).max())
        w /= w.sum()
        return float(np.dot(w, zs))

    def d2log_mgf(self, theta):
        zs, ws = self._pairs()
        w = ws * np.exp(theta * zs - (theta * zs).max())
        w /= w.sum()
        a = np.dot(w, zs)
        return float(np.dot(w, (zs - a) ** 2))

    def tilt(self, theta):
        zs, ws = self._pairs()
        w = ws * np.exp(theta * zs - (theta * zs).max())
        w /= w.sum()
        a = float(np.dot(w, zs))
        sigma2 = float(np.dot(w, (zs - a) ** 2))
        vals = zs - a

        def sampler(rng, size=None):
            idx = rng.choice(len(vals), size=size, p=w)
            return vals[idx]

        return TiltedStepLaw(theta, a, sigma2, sampler)

    def _palm_mixture(self, x, tol=1e-9):
        """[(prob, remaining-config)] of the Palm kernel at atom x."""
        weighted = []
        for p, a in self.configs:
            hits = np.flatnonzero(np.abs(a - x) <= tol)
            if len(hits):
                rest = np.delete(a, hits[0])
                weighted.append((p * len(hits), rest))
        total = sum(w for w, _ in weighted)
        if total <= 0:
            raise XNotInSupport(f"x={x} is not an atom of the intensity")
        return [(w / total, rest) for w, rest in weighted]

    def palm_sample(self, x, rng):
        mix = self._palm_mixture(x)
        if len(mix) == 1:
            return mix[0][1].copy()
        ps = np.array([p for p, _ in mix])
        return mix[int(rng.choice(len(mix), p=ps))][1].copy()

    def palm_batch(self, y, rng):
        flats, offsets = [], [0]
        for x in np.atleast_1d(y):
            cfg = self.palm_sample(float(x), rng)
            flats.append(cfg)
            offsets.append(offsets[-1] + len(cfg))
        flat = np.concatenate(flats) if flats else np.empty(0)
        return flat, np.asarray(offsets, dtype=np.int64)

    def intensity_atoms(self):
        zs, ws = self._pairs()
        agg: dict[float, float] = {}
        for z, w in zip(zs, ws):
            agg[z] = agg.get(z, 0.0) + w
        return sorted(agg.items())

    def kernel_range(self, tail):
        zs, _ = self._pairs()
        return float(zs.min()), float(zs.max())

    def config_mixture(self):
        return [(p, a.copy()) for p, a in self.configs]


class EmpiricalModel(OffspringModel):
    """Ensemble of stored configurations, resampled with replacement.

    The Palm kernel is only available as a flagged approximation
    (size-biased configuration pick, then removal of the point nearest x).
    """

    kind = "empirical"

    def __init__(self, configs, name: str):
        configs = [np.atleast_1d(np.asarray(c, dtype=float)) for c in configs]
        if not configs:
            raise ValueError("empty ensemble")
        self.offsets = np.zeros(len(configs) + 1, dtype=np.int64)
        np.cumsum([len(c) for c in configs], out=self.offsets[1:])
        self.flat = np.concatenate([c for c in configs]) if self.offsets[-1] else np.empty(0)
        self.name = name
        self.palm_exact = False
        self.zlog_moment_ok = True   # finite ensemble: all moments finite
        self.displacements_nonpositive = bool((self.flat <= 1e-12).all())

    @property
    def n_configs(self) -> int:
        return len(self.offsets) - 1

    def config(self, i: int) -> np.ndarray:
        return self.flat[self.offsets[i]:self.offsets[i + 1]]

    def sample(self, rng):
        return self.config(int(rng.integers(self.n_configs))).copy()

    def mean_offspring(self):
        return float(self.offsets[-1]) / self.n_configs

    def log_mgf(self, theta):
        if len(self.flat) == 0:
            return -math.inf
        return float(logsumexp(theta * self.flat)) - math.log(self.n_configs)

    def _tilt_weights(self, theta):
        w = np.exp(theta * self.flat - (theta * self.flat).max())
        return w / w.sum()

    def dlog_mgf(self, theta):
        w = self._tilt_weights(theta)
        return float(np.dot(w, self.flat))

    def d2log_mgf(self, theta):
        w = self._tilt_weights(theta)
        a = np.dot(w, self.flat)
        return float(np.dot(w, (self.flat - a) ** 2))

    def tilt(self, theta):
        w = self._tilt_weights(theta)
        a = float(np.dot(w, self.flat))
        sigma2 = float(np.dot(w, (self.flat - a) ** 2))
        vals = self.flat - a

        def sampler(rng, size=None):
            idx = rng.choice(len(vals), size=size, p=w)
            return vals[idx]

        return TiltedStepLaw(theta, a, sigma2, sampler)

    def palm_sample(self, x, rng, approximate=False):
        if not approximate:
            raise UnsupportedPalm(
                "empirical ensembles have only an approximate Palm kernel; "
                "pass approximate=True to opt in")
        counts = np.diff(self.offsets).astype(float)
        i = int(rng.choice(self.n_configs, p=counts / counts.sum()))
        cfg = self.config(i)
        drop = int(np.argmin(np.abs(cfg - x)))
        return np.delete(cfg, drop)

    def kernel_range(self, tail):
        return float(self.flat.min()), float(self.flat.max())

    def pair_arrays(self):
        """(flat displacements, config offsets) for grid-recursion kernels."""
        return self.flat, self.offsets

    def save_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("# one configuration per record: count,z1,z2,...\n")
            for i in range(self.n_configs):
                cfg = self.config(i)
                parts = [str(len(cfg))] + [format(z, ".17g") for z in cfg]
                fh.write(",".join(parts) + "\n")

    @classmethod
    def load_csv(cls, path, name="empirical") -> "EmpiricalModel":
        configs = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                k = int(parts[0])
                configs.append(np.array([float(v) for v in parts[1:1 + k]]))
        return cls(configs, name=name)


# ---------------------------------------------------------------------------
# operations


@dataclass
class PalmKernel:
    """Sampler of the reduced Palm configurations of one model."""

    model: OffspringModel

    def sample(self, x: float, rng) -> np.ndarray:
        return self.model.palm_sample(x, rng)


def sample_offspring(model: OffspringModel, rng) -> np.ndarray:
    """One independent family draw."""
    cfg = model.sample(rng)
    if len(cfg) > CONFIG_CAP:
        raise CapExceeded(f"configuration of {len(cfg)} points exceeds cap")
    return cfg


def sample_palm(kernel, x: float, rng) -> np.ndarray:
    """One draw of the reduced Palm configuration at x.

    Accepts a PalmKernel or a model directly.
    """
    model = kernel.model if isinstance(kernel, PalmKernel) else kernel
    return model.palm_sample(x, rng)


def empirical_cumulant(model: OffspringModel, theta: float, n: int,
                       seed: int = 0, workers: int | None = None) -> EstimatorReport:
    """log of the sample mean of Zhat(theta), with a delta-method stderr."""
    if n < 2:
        raise ValueError("need n >= 2")
    model.check_theta(theta)

    def block(i, size, rng):
        s = s2 = 0.0
        for _ in range(size):
            z = model.zhat(model.sample(rng), theta)
            if not math.isfinite(z):
                raise NonFiniteSample(f"Zhat overflowed at theta={theta}")
            s += z
            s2 += z * z
        return size, s, s2

    blocks = rngstreams.map_blocks(block, n, seed, rngstreams.SALT_EMP_CUMULANT, workers)
    base = report_from_moments(blocks, seed)
    est = math.log(base.estimate)
    se = base.stderr / base.estimate
    return EstimatorReport(est, se, base.n, seed, {"mean_zhat": base.estimate})


# ---------------------------------------------------------------------------
# catalog


def make_offspring(name: str, **params) -> OffspringModel:
    """Named model catalog used by the CLI and the test suites."""
    key = name.lower().replace("_", "-")
    if key == "gaussian-2":
        m = int(params.pop("m", 2))
        sigma = float(params.pop("sigma", 1.0))
        _reject_extra(params, name)
        return IIDDisplacementModel(FixedMultiplicity(m), NormalDisplacement(0.0, sigma),
                                    name=f"gaussian-{m}")
    if key == "binary-pm1":
        _reject_extra(params, name)
        return AtomSetModel([(1.0, np.array([-1.0, 1.0]))], name="binary-pm1")
    if key == "geometric-origin":
        q = float(params.pop("q", 1.0 / 3.0))
        _reject_extra(params, name)
        return IIDDisplacementModel(GeometricMultiplicity(q), PointDisplacement(0.0),
                                    name=f"geometric-origin(q={q:g})", allow_subcritical=True)
    if key == "poisson-gaussian":
        lam = float(params.pop("lam", 2.0))
        sigma = float(params.pop("sigma", 1.0))
        _reject_extra(params, name)
        return IIDDisplacementModel(PoissonMultiplicity(lam), NormalDisplacement(0.0, sigma),
                                    name=f"poisson-gaussian(lam={lam:g})")
    if key == "exp-pair":
        rate = float(params.pop("rate", 1.0))
        _reject_extra(params, name)
        return IIDDisplacementModel(FixedMultiplicity(2), ExponentialDisplacement(rate),
                                    name=f"exp-pair(rate={rate:g})")
    raise ValueError(f"unknown offspring model {name!r}")


def _reject_extra(params: dict, name: str) -> None:
    if params:
        raise ValueError(f"unknown parameters for {name!r}: {sorted(params)}")
