"""Gaussian proposal built from Polya-gamma conditional expectations.

Plugging E(omega_i) into the negative-binomial full conditional gives a
multivariate normal N(m, V) anchored at the current coefficient vector,
with

    V = (X' Omega X + B^{-1})^{-1},   m = V (X' kappa + B^{-1} b),
    Omega = diag{E(omega_i)},         kappa_i = E(omega_i) log r_i + (y_i - r_i)/2,

and E(omega_i) the mean of a PG(y_i + r_i, x_i' beta - log r_i) variable.
Only this mean is ever needed; no Polya-gamma variates are drawn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import solve_triangular

from .errors import NumericError
from .model import Dataset, GaussianPriorParams

__all__ = [
    "ProposalDensity",
    "pg_mean",
    "build_proposal",
    "sample_proposal",
    "proposal_logpdf",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


def _chol_lower(a):
    return np.linalg.cholesky(a)
# below this |c| the tanh form of the PG mean is evaluated as its limit b/4
_PG_SMALL_C = 1e-8
_JITTER_BASE = 1e-10
_JITTER_RETRIES = 3


@dataclass(frozen=True, eq=False)
class ProposalDensity:
    """A multivariate Gaussian N(m, V) anchored at a coefficient vector.

    ``L`` is the lower Cholesky factor of V; ``log_det_V`` equals
    2 * sum(log diag L).  The anchor records which beta the proposal was
    built from, so samplers can cache and reuse forward/backward builds.
    """

    m: np.ndarray
    L: np.ndarray
    log_det_V: float
    anchor: np.ndarray

    def __post_init__(self):
        for name in ("m", "L", "anchor"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def p(self) -> int:
        return self.m.size


def pg_mean(b_param, c_param):
    """Mean of a PG(b, c) random variable: (b / (2c)) * tanh(c / 2).

    The expression is 0/0 at c = 0; for |c| < 1e-8 the removable limit b/4
    is returned.  Accepts scalars or broadcastable arrays.
    """
    b = np.asarray(b_param, dtype=np.float64)
    c = np.asarray(c_param, dtype=np.float64)
    if np.any(b <= 0):
        raise ValueError("pg_mean requires b_param > 0")
    small = np.abs(c) < _PG_SMALL_C
    c_safe = np.where(small, 1.0, c)
    out = np.where(small, b / 4.0, (b / (2.0 * c_safe)) * np.tanh(c_safe / 2.0))
    if out.ndim == 0:
        return float(out)
    return out


def build_proposal(beta_anchor, data: Dataset, r, prior: GaussianPriorParams) -> "ProposalDensity":
    """Construct the PG-expectation proposal anchored at ``beta_anchor``.

    The covariance is formed as the inverse of the precision
    X' Omega X + B^{-1} through its Cholesky factor.  On a Cholesky failure
    the diagonal is jittered by 1e-10 * trace/p, escalating tenfold up to
    three retries, after which ``NumericError`` is raised (callers such as
    the samplers treat that as a rejected move).
    """
    beta_anchor = np.asarray(beta_anchor, dtype=np.float64)
    if beta_anchor.shape != (data.p,):
        raise ValueError(f"anchor has shape {beta_anchor.shape}, expected ({data.p},)")
    eta = data.X @ beta_anchor
    return _build_from_eta(eta, beta_anchor, data, r, prior)


def _build_from_eta(eta, beta_anchor, data: Dataset, r, prior: GaussianPriorParams) -> "ProposalDensity":
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (data.n,):
        raise ValueError(f"r has shape {r.shape}, expected ({data.n},)")
    if np.any(r <= 0):
        raise ValueError("all r_i must be positive")
    log_r = np.log(r)
    c = eta - log_r
    if not np.all(np.isfinite(c)):
        raise NumericError("non-finite PG tilt x'beta - log r in proposal build")
    omega = pg_mean(data._yf + r, c)
    kappa = omega * log_r + (data._yf - r) / 2.0
    precision = data.X.T @ (omega[:, None] * data.X) + prior.B_inv
    rhs = data.X.T @ kappa + prior.B_inv_b
    if not np.all(np.isfinite(precision)) or not np.all(np.isfinite(rhs)):
        raise NumericError("non-finite proposal precision")

    p = data.p
    jitter = _JITTER_BASE * float(np.trace(precision)) / p
    attempt = precision
    for k in range(_JITTER_RETRIES + 1):
        try:
            chol_prec = _chol_lower(attempt)
            break
        except LinAlgError:
            if k == _JITTER_RETRIES:
                raise NumericError(
                    "proposal precision is not positive definite after jitter retries"
                ) from None
            attempt = precision + np.eye(p) * jitter
            jitter *= 10.0

    # V = P^{-1} from the precision factor; then the lower factor of V itself
    inv_chol = solve_triangular(chol_prec, np.eye(p), lower=True, check_finite=False)
    cov = inv_chol.T @ inv_chol
    m = inv_chol.T @ (inv_chol @ rhs)
    try:
        chol_cov = _chol_lower(cov)
    except LinAlgError:
        raise NumericError("proposal covariance lost positive definiteness") from None
    log_det_v = 2.0 * float(np.sum(np.log(np.diagonal(chol_cov))))
    return ProposalDensity(m=m, L=chol_cov, log_det_V=log_det_v, anchor=beta_anchor)


def sample_proposal(prop: ProposalDensity, rng: np.random.Generator) -> np.ndarray:
    """Draw m + L z with z a vector of independent standard normals."""
    z = rng.standard_normal(prop.p)
    return prop.m + prop.L @ z


def proposal_logpdf(prop: ProposalDensity, beta) -> float:
    """Full Gaussian log-density of the proposal at ``beta``.

    The quadratic form is evaluated through a triangular solve against L;
    no covariance inverse is ever formed.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (prop.p,):
        raise ValueError(f"beta has shape {beta.shape}, expected ({prop.p},)")
    u = solve_triangular(prop.L, beta - prop.m, lower=True, check_finite=False)
    return -0.5 * (prop.p * _LOG_2PI + prop.log_det_V + float(u @ u))
