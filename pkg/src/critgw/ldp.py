"""Rate function of the trunk-type occupation measure and its special cases.

The level-2 rate of a finite Markov chain with transition matrix P at an
occupation candidate nu is sup over positive weight vectors w of
-sum_j nu_j log((P w)_j / w_j).  The objective is invariant under scaling
of w, so one weight is pinned to 1; in the exp parameterization it is
concave, but the optimizer still multi-starts as a guard and reports
divergence as an explicit infinity rather than a large float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forward import condition_on_survival, deviant_fraction
from .model import BranchingModel
from .spectral import SpectralData

__all__ = [
    "RateResult",
    "SlopePoint",
    "rate_J",
    "kl",
    "ld_slope_estimate",
]

DIVERGENCE_THRESHOLD = 50.0


@dataclass(frozen=True)
class RateResult:
    """Outcome of the rate-function optimization.

    ``value`` is +inf when the objective was detected to be unbounded; in
    that case ``maximizer`` is None and ``converged`` is False.  Finite
    converged results have gradient norm below 1e-8 at the maximizer, whose
    last weight is pinned to 1.
    """

    value: float
    maximizer: np.ndarray | None
    iterations: int
    converged: bool


def _validate_inputs(P, nu):
    P = np.asarray(P, dtype=float)
    nu = np.asarray(nu, dtype=float).ravel()
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("P must be a square matrix")
    if (P < 0).any() or np.abs(P.sum(axis=1) - 1.0).max() > 1e-10:
        raise ValueError("P must be row-stochastic within 1e-10")
    if nu.shape[0] != P.shape[0]:
        raise ValueError("nu must match the dimension of P")
    if (nu < 0).any() or abs(nu.sum() - 1.0) > 1e-9:
        raise ValueError("nu must be a probability vector")
    return P, nu


def _objective_grad(theta: np.ndarray, P: np.ndarray, nu: np.ndarray):
    w = np.exp(theta)
    pw = P @ w
    value = float(nu @ (theta - np.log(pw)))
    grad = nu - w * (P.T @ (nu / pw))
    grad[-1] = 0.0  # pinned coordinate
    return value, grad


def rate_J(P, nu, *, n_starts: int = 5, tol: float = 1e-10, max_iter: int = 5000,
           divergence_threshold: float = DIVERGENCE_THRESHOLD, seed: int = 0) -> RateResult:
    """Donsker-Varadhan level-2 rate of occupation candidate nu under chain P.

    Maximizes over w = exp(theta) with theta_d = 0 by gradient ascent with
    backtracking, from the flat start plus ``n_starts - 1`` random starts.
    Values exceeding ``divergence_threshold`` while the iterate keeps
    growing are reported as +inf.
    """
    P, nu = _validate_inputs(P, nu)
    d = nu.size
    rng = np.random.default_rng(seed)
    starts = [np.zeros(d)]
    for _ in range(max(0, n_starts - 1)):
        theta0 = rng.standard_normal(d)
        theta0[-1] = 0.0
        starts.append(theta0)

    best_value = -math.inf
    best_theta = None
    total_iters = 0
    for theta0 in starts:
        theta = theta0.copy()
        value, grad = _objective_grad(theta, P, nu)
        for _ in range(max_iter):
            total_iters += 1
            gnorm = float(np.linalg.norm(grad))
            if value > divergence_threshold and float(np.abs(theta).max()) > 1.0:
                return RateResult(value=math.inf, maximizer=None,
                                  iterations=total_iters, converged=False)
            if gnorm < tol:
                break
            step = 1.0
            while step > 1e-16:
                cand = theta + step * grad
                cand[-1] = 0.0
                cand_value, cand_grad = _objective_grad(cand, P, nu)
                if cand_value >= value + 1e-4 * step * gnorm**2:
                    theta, value, grad = cand, cand_value, cand_grad
                    break
                step *= 0.5
            else:
                break  # no ascent step left; treat current point as converged
        if value > best_value:
            best_value = value
            best_theta = theta
    assert best_theta is not None
    _value, grad = _objective_grad(best_theta, P, nu)
    converged = bool(np.linalg.norm(grad) < 1e-8)
    value = max(best_value, 0.0)  # the flat start scores exactly 0
    return RateResult(value=float(value), maximizer=np.exp(best_theta),
                      iterations=total_iters, converged=converged)


def kl(nu, pi) -> float:
    """Relative entropy sum nu_j log(nu_j / pi_j), with 0 log 0 = 0.

    Infinite when nu charges a pi-null category.
    """
    nu = np.asarray(nu, dtype=float).ravel()
    pi = np.asarray(pi, dtype=float).ravel()
    if nu.shape != pi.shape:
        raise ValueError("nu and pi must have the same length")
    for name, vec in (("nu", nu), ("pi", pi)):
        if (vec < 0).any() or abs(vec.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} must be a probability vector")
    total = 0.0
    for a, b in zip(nu, pi):
        if a == 0.0:
            continue
        if b == 0.0:
            return math.inf
        total += a * math.log(a / b)
    return total


@dataclass(frozen=True)
class SlopePoint:
    """Estimated (1/n) log-probability that a deviant lineage exists at horizon n."""

    n: int
    probability: float
    slope: float
    slope_lo: float
    slope_hi: float
    replicates: int


def ld_slope_estimate(model: BranchingModel, spectral: SpectralData, rho: float,
                      n_list, replicates: int, rng: np.random.Generator,
                      root: int = 0, max_attempts_factor: int = 2000) -> list[SlopePoint]:
    """Monte Carlo decay-rate estimates for the existence of a deviant lineage.

    For each horizon n, draws ``replicates`` trees conditioned on survival
    and records the fraction containing at least one individual whose
    lineage occupation is rho-far (total variation) from alpha.  The slope
    is log(p)/n with a Wilson 95% band; zero frequency yields a -inf
    sentinel.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    z = np.zeros(model.d, dtype=np.int64)
    z[root] = 1
    out = []
    for n in n_list:
        hits = 0
        max_attempts = max_attempts_factor * max(n, 1)
        for _ in range(replicates):
            tree = condition_on_survival(model, z, n, rng, max_attempts=max_attempts)
            if deviant_fraction(tree, n, rho, spectral.alpha) > 0.0:
                hits += 1
        p_hat = hits / replicates
        lo, hi = _wilson(hits, replicates)
        out.append(SlopePoint(
            n=n,
            probability=p_hat,
            slope=math.log(p_hat) / n if p_hat > 0 else -math.inf,
            slope_lo=math.log(lo) / n if lo > 0 else -math.inf,
            slope_hi=math.log(hi) / n if hi > 0 else -math.inf,
            replicates=replicates,
        ))
    return out


def _wilson(hits: int, total: int, z: float = 1.96) -> tuple[float, float]:
    if total == 0:
        raise ValueError("no surviving replicates")
    p = hits / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)
