"""Closed-form limit laws of the rescaled population and their samplers.

Four scalar laws appear: the exponential reached by conditioning on
survival, its size-biased Gamma(2, .) counterpart under the transformed
measure, the compound-Poisson-of-exponentials transition law from a
macroscopic start, and the size-biased transition kernel whose density is a
Bessel-type series.  All are pinned to the printed densities rather than to
a squared-Bessel SDE convention, which fixes the time scale unambiguously:
in Q-normalized units the process started at zero has a Gamma(2, t)
marginal at time t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammainc, gammaln, i1e

__all__ = [
    "LimitParams",
    "ScalarLaw",
    "ExponentialLaw",
    "GammaTwoLaw",
    "CompoundPoissonExpLaw",
    "SizeBiasedTransitionLaw",
    "entrance_conditioned",
    "entrance_hhat",
    "transition_law",
    "sb_transition_density",
    "sample_sb_transition",
    "sample_limit_fdd",
    "corollary_functional",
    "FUNCTIONALS",
]

_SERIES_RTOL = 1e-15
# beyond this the series terms overflow; switch to the exponentially
# scaled Bessel evaluation, which is exact for all argument sizes
_SERIES_MAX_R = 300.0


@dataclass(frozen=True)
class LimitParams:
    """Scale parameters of the limit laws.

    ``q_u`` is the quadratic-form scalar of the model, ``t`` the macroscopic
    time, ``a`` the u-mass of a macroscopic start (transition laws), and
    ``x`` the entrance point for kernel evaluations.  theta = q_u * t is the
    common scale.
    """

    q_u: float
    t: float
    a: float = 0.0
    x: float = 0.0

    def __post_init__(self) -> None:
        if not self.q_u > 0:
            raise ValueError(f"q_u must be > 0, got {self.q_u}")
        if not self.t > 0:
            raise ValueError(f"t must be > 0, got {self.t}")
        if self.a < 0:
            raise ValueError(f"a must be >= 0, got {self.a}")
        if self.x < 0:
            raise ValueError(f"x must be >= 0, got {self.x}")

    @property
    def theta(self) -> float:
        return self.q_u * self.t


class ScalarLaw:
    """Common interface of the scalar limit laws.

    Subclasses provide ``pdf`` and ``cdf`` (vectorized over y), the mass
    ``atom_zero`` sitting exactly at 0, a ``sample`` method driven by an
    explicit generator, and ``mean``.
    """

    tag: str = "abstract"
    atom_zero: float = 0.0

    def pdf(self, y):  # pragma: no cover - interface
        raise NotImplementedError

    def cdf(self, y):  # pragma: no cover - interface
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):  # pragma: no cover - interface
        raise NotImplementedError

    def mean(self) -> float:  # pragma: no cover - interface
        raise NotImplementedError


def _nonneg(y):
    """Split input into (1-d array clipped at 0, negative mask, was-scalar flag)."""
    arr = np.asarray(y, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    neg = arr < 0
    return np.where(neg, 0.0, arr), neg, scalar


def _restore(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


class ExponentialLaw(ScalarLaw):
    """Exponential with mean theta (the conditioned entrance law)."""

    tag = "exponential"

    def __init__(self, theta: float):
        if not theta > 0:
            raise ValueError(f"theta must be > 0, got {theta}")
        self.theta = float(theta)

    def pdf(self, y):
        yc, neg, scalar = _nonneg(y)
        out = np.exp(-yc / self.theta) / self.theta
        out[neg] = 0.0
        return _restore(out, scalar)

    def cdf(self, y):
        yc, _neg, scalar = _nonneg(y)
        return _restore(-np.expm1(-yc / self.theta), scalar)

    def sample(self, rng, size=None):
        return rng.exponential(self.theta, size=size)

    def mean(self) -> float:
        return self.theta


class GammaTwoLaw(ScalarLaw):
    """Gamma with shape 2 and scale theta (size-biased exponential)."""

    tag = "gamma2"

    def __init__(self, theta: float):
        if not theta > 0:
            raise ValueError(f"theta must be > 0, got {theta}")
        self.theta = float(theta)

    def pdf(self, y):
        yc, _neg, scalar = _nonneg(y)
        return _restore(yc * np.exp(-yc / self.theta) / self.theta**2, scalar)

    def cdf(self, y):
        yc, _neg, scalar = _nonneg(y)
        return _restore(gammainc(2.0, yc / self.theta), scalar)

    def sample(self, rng, size=None):
        return rng.gamma(2.0, self.theta, size=size)

    def mean(self) -> float:
        return 2.0 * self.theta


def _poisson_weights(lam: float) -> np.ndarray:
    """Poisson(lam) pmf on 0..K with tail mass below 1e-15; requires lam > 0."""
    k_max = int(lam + 12.0 * math.sqrt(lam) + 30.0)
    ks = np.arange(k_max + 1)
    return np.exp(-lam + ks * math.log(lam) - gammaln(ks + 1.0))


class CompoundPoissonExpLaw(ScalarLaw):
    """Sum of a Poisson(a/theta) number of Exponential(theta) variables.

    Carries an atom of mass exp(-a/theta) at zero; the continuous part is a
    Poisson mixture of Gamma(k, theta) densities.  The mean is exactly a.
    """

    tag = "cpe"

    def __init__(self, a: float, theta: float):
        if a < 0:
            raise ValueError(f"a must be >= 0, got {a}")
        if not theta > 0:
            raise ValueError(f"theta must be > 0, got {theta}")
        self.a = float(a)
        self.theta = float(theta)
        self.atom_zero = math.exp(-a / theta) if a > 0 else 1.0

    def pdf(self, y):
        """Density of the continuous part (does not include the atom)."""
        yc, _neg, scalar = _nonneg(y)
        out = np.zeros_like(yc)
        if self.a > 0:
            pos = yc > 0
            yp = yc[pos]
            r = np.sqrt(self.a * yp) / self.theta
            out[pos] = _exp_series(-(self.a + yp) / self.theta, r) * r / yp
        return _restore(out, scalar)

    def cdf(self, y):
        yc, neg, scalar = _nonneg(y)
        if self.a == 0:
            out = np.where(neg, 0.0, 1.0)
            return _restore(out, scalar)
        weights = _poisson_weights(self.a / self.theta)
        yt = yc / self.theta
        acc = np.full_like(yt, weights[0])
        for k in range(1, weights.size):
            if weights[k] < 1e-18:
                continue
            acc = acc + weights[k] * gammainc(float(k), yt)
        acc[neg] = 0.0
        return _restore(acc, scalar)

    def sample(self, rng, size=None):
        k = rng.poisson(self.a / self.theta, size=size)
        out = rng.gamma(np.maximum(k, 1), self.theta, size=size)
        return np.where(k > 0, out, 0.0)

    def mean(self) -> float:
        return self.a


class SizeBiasedTransitionLaw(ScalarLaw):
    """Size-biased transition law from point x over scale theta.

    Representable as Gamma(K + 2, theta) with K ~ Poisson(x/theta); its
    density is :func:`sb_transition_density`.  No atom at zero.
    """

    tag = "sbtrans"

    def __init__(self, x: float, theta: float):
        if x < 0:
            raise ValueError(f"x must be >= 0, got {x}")
        if not theta > 0:
            raise ValueError(f"theta must be > 0, got {theta}")
        self.x = float(x)
        self.theta = float(theta)

    def pdf(self, y):
        return sb_transition_density(self.x, y, self.theta)

    def cdf(self, y):
        yc, neg, scalar = _nonneg(y)
        yt = yc / self.theta
        if self.x == 0:
            out = gammainc(2.0, yt)
            out[neg] = 0.0
            return _restore(out, scalar)
        weights = _poisson_weights(self.x / self.theta)
        acc = np.zeros_like(yt)
        for k in range(weights.size):
            if weights[k] < 1e-18:
                continue
            acc = acc + weights[k] * gammainc(float(k + 2), yt)
        acc[neg] = 0.0
        return _restore(acc, scalar)

    def sample(self, rng, size=None):
        return sample_sb_transition(self.x, self.theta, rng, size=size)

    def mean(self) -> float:
        return self.x + 2.0 * self.theta


# ---------------------------------------------------------------------------
# the Bessel-type series


def _i1_series(r: np.ndarray) -> np.ndarray:
    """S(r) = sum_k r^(2k+1) / (k! (k+1)!), the series form of I1(2r).

    Terms are accumulated until the running term falls below 1e-15 of the
    partial sum and the index has passed r (the terms peak near k = r).
    """
    r = np.asarray(r, dtype=float)
    if r.size == 0:
        return r.copy()
    term = r.copy()
    total = r.copy()
    k = 0
    k_min = int(np.ceil(r.max()))
    while True:
        k += 1
        term = term * (r * r) / (k * (k + 1))
        total = total + term
        if k >= k_min and np.all(term <= _SERIES_RTOL * np.maximum(total, 1e-300)):
            break
        if k > 100_000:  # unreachable for r below the series cutoff
            raise RuntimeError("series for the transition density did not converge")
    return total


def _exp_series(log_prefactor: np.ndarray, r: np.ndarray) -> np.ndarray:
    """exp(log_prefactor) * S(r), switching to the scaled Bessel form for large r.

    For r above the series cutoff the direct series would overflow, so the
    value is assembled as exp(log_prefactor + 2r) * i1e(2r), which never
    overflows because the laws here always have log_prefactor <= -2r.
    """
    log_prefactor = np.asarray(log_prefactor, dtype=float)
    r = np.asarray(r, dtype=float)
    out = np.zeros(np.broadcast(log_prefactor, r).shape)
    log_prefactor, r = np.broadcast_arrays(log_prefactor, r)
    small = r <= _SERIES_MAX_R
    if small.any():
        out[small] = np.exp(log_prefactor[small]) * _i1_series(r[small])
    if (~small).any():
        rl = r[~small]
        out[~small] = np.exp(log_prefactor[~small] + 2.0 * rl) * i1e(2.0 * rl)
    return out


def sb_transition_density(x: float, y, theta: float):
    """Density p(x, y) of the size-biased transition kernel.

    p(x, y) = exp(-(x+y)/theta) (1/theta) sqrt(y/x) S(sqrt(x y)/theta) for
    x > 0, with S the series above; the x -> 0 limit is the Gamma(2, theta)
    density, returned exactly when x == 0.
    """
    if not theta > 0:
        raise ValueError(f"theta must be > 0, got {theta}")
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    y_arr = np.asarray(y, dtype=float)
    if (y_arr < 0).any():
        raise ValueError("y must be >= 0")
    scalar = y_arr.ndim == 0
    y_arr = np.atleast_1d(y_arr)
    out = np.zeros_like(y_arr)
    if x == 0:
        out = y_arr * np.exp(-y_arr / theta) / theta**2
    else:
        pos = y_arr > 0
        yp = y_arr[pos]
        r = np.sqrt(x * yp) / theta
        vals = _exp_series(-(x + yp) / theta, r) * np.sqrt(yp / x) / theta
        out[pos] = vals
    return float(out[0]) if scalar else out


def sample_sb_transition(x: float, theta: float, rng: np.random.Generator, size=None):
    """Draw from the size-biased transition law: Gamma(K+2, theta), K ~ Poisson(x/theta)."""
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if not theta > 0:
        raise ValueError(f"theta must be > 0, got {theta}")
    k = rng.poisson(x / theta, size=size) if x > 0 else (
        0 if size is None else np.zeros(size, dtype=np.int64)
    )
    return rng.gamma(np.asarray(k) + 2.0, theta, size=size)


def sample_limit_fdd(times, rng: np.random.Generator) -> np.ndarray:
    """Sample the scalar limit process at the given times (Q-normalized scale).

    The first marginal is Gamma(2, t1); subsequent values follow the
    size-biased transition kernel over each increment.  The vector-valued
    limit is this scalar path times the left eigenvector.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d sequence")
    if times[0] <= 0 or (np.diff(times) <= 0).any():
        raise ValueError("times must be strictly increasing and positive")
    out = np.empty(times.size)
    out[0] = rng.gamma(2.0, times[0])
    for k in range(1, times.size):
        out[k] = sample_sb_transition(out[k - 1], times[k] - times[k - 1], rng)
    return out


# ---------------------------------------------------------------------------
# entrance/transition law constructors


def entrance_conditioned(params: LimitParams) -> ExponentialLaw:
    """Limit of the linearly rescaled population given survival: Exponential(mean theta)."""
    return ExponentialLaw(params.theta)


def entrance_hhat(params: LimitParams) -> GammaTwoLaw:
    """Limit of the rescaled population under the transformed measure: Gamma(2, theta)."""
    return GammaTwoLaw(params.theta)


def transition_law(params: LimitParams) -> CompoundPoissonExpLaw:
    """Limit law from a macroscopic start with u-mass a: compound Poisson of exponentials."""
    return CompoundPoissonExpLaw(params.a, params.theta)


# ---------------------------------------------------------------------------
# the conditioned-functional identity

FUNCTIONALS: dict = {
    "w_over_1pw": lambda w: w / (1.0 + w),
    "w_exp_neg_w": lambda w: w * np.exp(-w),
    "one": lambda w: np.ones_like(np.asarray(w, dtype=float)),
    "zero": lambda w: np.zeros_like(np.asarray(w, dtype=float)),
}


def corollary_functional(f_spec: str, params: LimitParams | None = None) -> float:
    """Limit of conditioned expectations of bounded functionals of the time-1 value.

    Evaluates the integral of f(w)/w against the Gamma(2, 1) density of the
    u-mass of the limit at time 1 (Q-normalized scale, so no parameters
    enter).  Only the whitelisted bounded continuous functionals in
    ``FUNCTIONALS`` are accepted.
    """
    if f_spec not in FUNCTIONALS:
        raise ValueError(f"unsupported functional {f_spec!r}; known: {sorted(FUNCTIONALS)}")
    f = FUNCTIONALS[f_spec]

    def integrand(w: float) -> float:
        density = w * math.exp(-w)
        return float(f(w)) / w * density if w > 0 else 0.0

    value, _err = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-10, epsrel=1e-10, limit=200)
    return float(value)
