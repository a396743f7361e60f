"""Perron-Frobenius data of the mean matrix and derived quantities.

Computes the principal eigenvalue with its positive left/right eigenvectors,
normalized so that the left vector and the componentwise product of the two
are probability vectors.  The scalar Q[u] built from the second factorial
moments sets the scale of every limit law downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import BranchingModel, ModelError, q_form_vector

__all__ = [
    "SpectralData",
    "ConvergenceError",
    "NotCriticalError",
    "CRITICAL_TOL",
    "perron_eigen",
    "big_Q",
    "survival_asymptote",
    "check_critical",
    "require_critical",
]

CRITICAL_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Power iteration failed to converge within the iteration cap."""


class NotCriticalError(ValueError):
    """An operation that assumes a unit principal eigenvalue was refused."""


@dataclass(frozen=True)
class SpectralData:
    """Principal eigenvalue, eigenvectors, and derived scalars.

    ``u`` and ``v`` are the positive right and left eigenvectors of the mean
    matrix, normalized so that v sums to one and <u, v> = 1.  ``alpha`` is
    the componentwise product u * v (a probability vector) and ``q_u`` is
    the quadratic form evaluated at u.
    """

    lam: float
    u: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    q_u: float

    def validate(self, mean_matrix: np.ndarray | None = None, tol: float = 1e-10) -> None:
        """Check the normalization and eigen identities; raises on failure."""
        if abs(self.v.sum() - 1.0) > tol:
            raise ValueError("left eigenvector does not sum to 1")
        if abs(float(self.u @ self.v) - 1.0) > tol:
            raise ValueError("<u, v> != 1")
        if (self.u <= 0).any() or (self.v <= 0).any():
            raise ValueError("eigenvectors must be strictly positive")
        if abs(self.alpha.sum() - 1.0) > tol or (self.alpha <= 0).any():
            raise ValueError("alpha is not a positive probability vector")
        if mean_matrix is not None:
            scale = np.abs(self.u).max()
            if np.abs(mean_matrix @ self.u - self.lam * self.u).max() > tol * scale:
                raise ValueError("u is not a right eigenvector at the stated eigenvalue")
            if np.abs(self.v @ mean_matrix - self.lam * self.v).max() > tol:
                raise ValueError("v is not a left eigenvector at the stated eigenvalue")


def perron_eigen(model: BranchingModel, tol: float = 1e-12, max_iter: int = 100_000) -> SpectralData:
    """Power iteration for the Perron-Frobenius triple of the mean matrix.

    The iteration runs on (M + I)/2, which has the same eigenvectors but no
    peripheral eigenvalues other than the principal one, so it converges for
    periodic support graphs as well.  The principal eigenvalue of M is
    recovered as 2 lambda' - 1.  Deterministic: the start vector is all ones.
    """
    mat = model.mean_matrix()
    d = model.d
    shifted = 0.5 * (mat + np.eye(d))
    x = np.ones(d) / d
    y = np.ones(d) / d
    for _ in range(max_iter):
        x_new = shifted @ x
        x_new /= x_new.sum()
        y_new = y @ shifted
        y_new /= y_new.sum()
        if np.abs(x_new - x).max() <= tol and np.abs(y_new - y).max() <= tol:
            x, y = x_new, y_new
            break
        x, y = x_new, y_new
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")
    lam_shifted = float(y @ (shifted @ x)) / float(y @ x)
    lam = 2.0 * lam_shifted - 1.0
    v = y / y.sum()
    u = x / float(x @ v)
    alpha = u * v
    spectral = SpectralData(lam=lam, u=u, v=v, alpha=alpha, q_u=np.nan)
    return replace(spectral, q_u=big_Q(model, spectral))


def big_Q(model: BranchingModel, spectral: SpectralData) -> float:
    """The scalar Q[u] = <v, q[u]> from the second factorial moments."""
    return float(spectral.v @ q_form_vector(model, spectral.u))


def check_critical(spectral: SpectralData, tol: float = CRITICAL_TOL) -> bool:
    """True when the principal eigenvalue equals 1 within tolerance."""
    return abs(spectral.lam - 1.0) <= tol


def require_critical(
    spectral: SpectralData,
    *,
    allow_noncritical: bool = False,
    tol: float = CRITICAL_TOL,
    what: str = "this operation",
) -> None:
    """Refuse non-critical models unless explicitly overridden."""
    if allow_noncritical or check_critical(spectral, tol=tol):
        return
    raise NotCriticalError(
        f"{what} assumes a critical model (principal eigenvalue 1); "
        f"got {spectral.lam!r}. Pass allow_noncritical=True to override."
    )


def survival_asymptote(spectral: SpectralData, z, *, allow_noncritical: bool = False) -> float:
    """Limit of n times the survival probability from start z, namely <u, z>/Q[u].

    Linear in z; only meaningful for critical models, hence gated.
    """
    require_critical(spectral, allow_noncritical=allow_noncritical, what="survival_asymptote")
    z = np.asarray(z, dtype=float)
    if z.shape != spectral.u.shape:
        raise ModelError(f"z must have length {spectral.u.shape[0]}")
    if not (z > 0).any():
        raise ModelError("z must be nonzero")
    return float(spectral.u @ z) / spectral.q_u
