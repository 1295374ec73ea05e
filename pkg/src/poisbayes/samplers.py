"""Metropolis-Hastings and adaptive importance samplers.

Both samplers drive the same PG-expectation Gaussian proposal: at each
iteration the stopping parameters r_i are re-solved at the current
coefficient vector, the proposal is rebuilt there, and a draw is scored
against the exact Poisson posterior.  The MH variant corrects with the
usual acceptance ratio (backward density rebuilt at the proposed point);
the importance sampler keeps every draw and records a log-weight instead.

Priors are conditionally Gaussian: either a fixed N(b, B) or the horseshoe
beta_j | eta_j^2, tau^2 ~ N(0, eta_j^2 tau^2) with half-Cauchy local scales
handled through their inverse-gamma auxiliary representation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .diagnostics import ess_from_log_weights
from .errors import EstimationError, NumericError
from .kernels import sample_invgamma
from .model import (
    Dataset,
    GaussianPriorParams,
    _log_poisson_from_eta,
    log_gaussian_prior,
)
from .proposal import ProposalDensity, _build_from_eta, proposal_logpdf
from .tuning import TuningDiagnostics, TuningPolicy, r_vector_for_lambdas

__all__ = [
    "FixedGaussianPrior",
    "HorseshoePrior",
    "PriorSpec",
    "HorseshoeState",
    "MHConfig",
    "ChainOutput",
    "ISOutput",
    "StepTrace",
    "mh_step",
    "mh_run",
    "is_run",
    "horseshoe_update",
    "tau_optimal",
    "poisson_mle",
]


@dataclass(frozen=True)
class FixedGaussianPrior:
    """A fixed Gaussian prior N(b, B) on the coefficients."""

    params: GaussianPriorParams


@dataclass(frozen=True)
class HorseshoePrior:
    """Horseshoe prior with fixed global scale tau; local scales are sampled."""

    tau: float

    def __post_init__(self):
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")


PriorSpec = Union[FixedGaussianPrior, HorseshoePrior]


@dataclass(frozen=True, eq=False)
class HorseshoeState:
    """Local scale squares eta_j^2 and their inverse-gamma auxiliaries nu_j."""

    eta2: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        eta2 = np.asarray(self.eta2, dtype=np.float64)
        nu = np.asarray(self.nu, dtype=np.float64)
        if np.any(eta2 <= 0) or np.any(nu <= 0):
            raise ValueError("horseshoe state entries must be strictly positive")
        object.__setattr__(self, "eta2", eta2)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def initial(cls, p: int) -> "HorseshoeState":
        return cls(eta2=np.ones(p), nu=np.ones(p))


@dataclass(frozen=True)
class MHConfig:
    """Run configuration shared by the MH and importance samplers.

    ``init_beta`` may be an explicit vector, ``"mle"`` (deterministic
    damped-Newton Poisson fit, the default) or ``"zeros"``.  The MLE start
    matters: the backward proposal is very tight once the fitted means are
    large, so a chain started far from the posterior mode proposes jumps
    whose reverse move is essentially impossible and can reject forever.
    """

    iterations: int = 10000
    burnin: int = 5000
    tuning: TuningPolicy = field(default_factory=lambda: TuningPolicy(d=0.1))
    seed: int = 0
    init_beta: Union[str, np.ndarray] = "mle"

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= int(self.burnin) < int(self.iterations):
            raise ValueError("need 0 <= burnin < iterations")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if isinstance(self.init_beta, str) and self.init_beta not in ("mle", "zeros"):
            raise ValueError("init_beta must be a vector, 'mle' or 'zeros'")


@dataclass(frozen=True, eq=False)
class StepTrace:
    """Per-iteration internals recorded on request for replay checks."""

    proposals: np.ndarray
    log_alphas: np.ndarray
    uniforms: np.ndarray


@dataclass(frozen=True, eq=False)
class ChainOutput:
    """Output of an MH run; ``draws`` holds the post-burn-in part only."""

    draws: np.ndarray
    accepted: np.ndarray
    elapsed_seconds: float
    acceptance_rate: float
    seed: int
    burnin: int
    prior_trace: np.ndarray | None = None
    full_draws: np.ndarray | None = None
    proposal_failures: int = 0
    tuning_fallbacks: int = 0
    step_trace: StepTrace | None = None


@dataclass(frozen=True, eq=False)
class ISOutput:
    """Output of an adaptive importance run (post-burn-in draws and weights)."""

    draws: np.ndarray
    log_weights: np.ndarray
    ess_weights: float
    elapsed_seconds: float
    seed: int
    proposal_failures: int = 0
    tuning_fallbacks: int = 0


def tau_optimal(n: int, p_n: int) -> float:
    """Global horseshoe scale (p_n/n) sqrt(log(n/p_n)) for p_n non-null signals."""
    n = int(n)
    p_n = int(p_n)
    if n < 1 or p_n < 1:
        raise ValueError("n and p_n must be positive integers")
    if p_n >= n:
        raise ValueError(f"need p_n < n, got p_n={p_n}, n={n}")
    return (p_n / n) * float(np.sqrt(np.log(n / p_n)))


def horseshoe_update(beta, state: HorseshoeState, tau: float, rng: np.random.Generator) -> HorseshoeState:
    """One sweep of the auxiliary inverse-gamma conditionals:

        eta_j^2 | . ~ InvGamma(1, 1/nu_j + beta_j^2 / (2 tau^2))
        nu_j    | . ~ InvGamma(1, 1 + 1/eta_j^2)
    """
    beta = np.asarray(beta, dtype=np.float64)
    if tau <= 0:
        raise ValueError("tau must be positive")
    eta2 = sample_invgamma(1.0, 1.0 / state.nu + beta**2 / (2.0 * tau**2), rng, size=beta.size)
    nu = sample_invgamma(1.0, 1.0 + 1.0 / eta2, rng, size=beta.size)
    return HorseshoeState(eta2=eta2, nu=nu)


def poisson_mle(data: Dataset, ridge: float = 1e-8, max_iter: int = 100) -> np.ndarray:
    """Deterministic ridge-stabilized Poisson fit, used as the default chain
    initialization.

    Damped Newton with backtracking on the (strictly concave) penalized
    log-likelihood, started from the standard GLM guess mu = y + 1/2; the
    tiny ridge keeps the optimum finite under separation.
    """
    X, y = data.X, data._yf
    eye = ridge * np.eye(data.p)

    def objective(beta):
        eta = np.clip(X @ beta, -30.0, 30.0)
        return float(y @ eta - np.exp(eta).sum() - 0.5 * ridge * (beta @ beta))

    mu0 = y + 0.5
    try:
        beta = np.linalg.solve(X.T @ (mu0[:, None] * X) + eye, X.T @ (mu0 * np.log(mu0)))
    except np.linalg.LinAlgError:
        beta = np.zeros(data.p)
    obj = objective(beta)
    for _ in range(max_iter):
        eta = np.clip(X @ beta, -30.0, 30.0)
        lam = np.exp(eta)
        grad = X.T @ (y - lam) - ridge * beta
        hess = X.T @ (lam[:, None] * X) + eye
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        for _ in range(40):
            candidate_obj = objective(beta + scale * step)
            if candidate_obj >= obj:
                break
            scale *= 0.5
        beta = beta + scale * step
        if candidate_obj < obj or float(np.max(np.abs(scale * step))) < 1e-10:
            obj = max(obj, candidate_obj)
            break
        obj = candidate_obj
    if not np.all(np.isfinite(beta)):
        return np.zeros(data.p)
    return beta


def _initial_beta(config: MHConfig, data: Dataset) -> np.ndarray:
    if isinstance(config.init_beta, str):
        if config.init_beta == "zeros":
            return np.zeros(data.p)
        return poisson_mle(data)
    beta = np.asarray(config.init_beta, dtype=np.float64)
    if beta.shape != (data.p,):
        raise ValueError(f"init_beta has shape {beta.shape}, expected ({data.p},)")
    if not np.all(np.isfinite(beta)):
        raise ValueError("init_beta contains non-finite entries")
    return beta


def _effective_prior(prior: PriorSpec, state: HorseshoeState | None, p: int) -> GaussianPriorParams:
    if isinstance(prior, FixedGaussianPrior):
        if prior.params.p != p:
            raise ValueError(f"prior has dimension {prior.params.p}, data has p={p}")
        return prior.params
    return GaussianPriorParams(np.zeros(p), np.diag(prior.tau**2 * state.eta2))


class _ChainState:
    """Cached quantities at the current point of a chain."""

    __slots__ = ("beta", "eta", "lam", "loglik", "r", "fwd", "fwd_prior",
                 "logprior", "logprior_prior")

    def __init__(self, beta, eta, lam, loglik, r, fwd=None, fwd_prior=None):
        self.beta = beta
        self.eta = eta
        self.lam = lam
        self.loglik = loglik
        self.r = r
        self.fwd = fwd
        self.fwd_prior = fwd_prior
        self.logprior = None
        self.logprior_prior = None

    def prior_logpdf(self, prior: GaussianPriorParams) -> float:
        if self.logprior_prior is not prior:
            self.logprior = log_gaussian_prior(self.beta, prior)
            self.logprior_prior = prior
        return self.logprior


class _PGKernel:
    """The PG-expectation MH transition, with per-state caching.

    Forward r-vectors and proposals are reused while the anchor and the
    effective prior are unchanged; an accepted move promotes the backward
    build to the next forward build, so the per-iteration cost is one
    r-solve and one proposal build at stationarity.
    """

    def __init__(self, data: Dataset, policy: TuningPolicy, tuning_diag: TuningDiagnostics):
        self.data = data
        self.policy = policy
        self.tuning_diag = tuning_diag
        self.proposal_failures = 0

    def make_state(self, beta) -> _ChainState:
        beta = np.asarray(beta, dtype=np.float64)
        eta = self.data.X @ beta
        with np.errstate(over="ignore"):
            lam = np.exp(eta)
        loglik = _log_poisson_from_eta(eta, self.data)
        r = r_vector_for_lambdas(lam, self.policy, self.tuning_diag)
        return _ChainState(beta, eta, lam, loglik, r)

    def forward(self, state: _ChainState, prior: GaussianPriorParams) -> ProposalDensity:
        if state.fwd is None or state.fwd_prior is not prior:
            state.fwd = _build_from_eta(state.eta, state.beta, self.data, state.r, prior)
            state.fwd_prior = prior
        return state.fwd

    def step(self, state: _ChainState, prior: GaussianPriorParams, z, u):
        """Returns (state, proposal, accepted, log_alpha)."""
        data = self.data
        try:
            fwd = self.forward(state, prior)
        except NumericError:
            self.proposal_failures += 1
            return state, state.beta, False, -np.inf
        beta_star = fwd.m + fwd.L @ z
        eta_star = data.X @ beta_star
        loglik_star = _log_poisson_from_eta(eta_star, data)
        if loglik_star == -np.inf:
            # zero-likelihood proposal; reject without a backward build
            return state, beta_star, False, -np.inf
        with np.errstate(over="ignore"):
            lam_star = np.exp(eta_star)
        r_bwd = r_vector_for_lambdas(lam_star, self.policy, self.tuning_diag)
        try:
            bwd = _build_from_eta(eta_star, beta_star, data, r_bwd, prior)
        except NumericError:
            self.proposal_failures += 1
            return state, beta_star, False, -np.inf
        # grouped as pairwise differences so identical states cancel exactly
        logprior_star = log_gaussian_prior(beta_star, prior)
        log_post_ratio = (loglik_star - state.loglik) + (
            logprior_star - state.prior_logpdf(prior)
        )
        log_q_ratio = proposal_logpdf(bwd, state.beta) - proposal_logpdf(fwd, beta_star)
        log_alpha = log_post_ratio + log_q_ratio
        accepted = log_alpha >= 0.0 or np.log(u) < log_alpha
        if accepted:
            state = _ChainState(
                beta_star, eta_star, lam_star, loglik_star, r_bwd, fwd=bwd, fwd_prior=prior
            )
            state.logprior = logprior_star
            state.logprior_prior = prior
        return state, beta_star, accepted, log_alpha


def mh_step(beta_prev, data: Dataset, prior_effective: GaussianPriorParams,
            policy: TuningPolicy, rng: np.random.Generator,
            diagnostics: TuningDiagnostics | None = None):
    """One MH transition from ``beta_prev`` under a fixed effective prior.

    Builds the forward proposal at ``beta_prev``, draws beta*, rebuilds the
    backward proposal anchored at beta*, and accepts with probability
    min(1, exp(log_alpha)) using a single uniform.  A numeric failure in
    either proposal build rejects the move (log_alpha = -inf).

    Returns ``(beta_next, accepted, log_alpha)``.
    """
    beta_prev = np.asarray(beta_prev, dtype=np.float64)
    if not np.all(np.isfinite(beta_prev)):
        raise ValueError("beta_prev must be finite")
    tdiag = diagnostics if diagnostics is not None else TuningDiagnostics()
    kernel = _PGKernel(data, policy, tdiag)
    state = kernel.make_state(beta_prev)
    z = rng.standard_normal(data.p)
    u = rng.uniform()
    state, _, accepted, log_alpha = kernel.step(state, prior_effective, z, u)
    return state.beta, accepted, float(log_alpha)


def mh_run(data: Dataset, prior: PriorSpec, config: MHConfig,
           keep_burnin: bool = False, keep_step_trace: bool = False) -> ChainOutput:
    """Run the PG-expectation MH chain.

    Under the horseshoe prior each beta update is followed by one sweep of
    the scale conditionals (eta^2 then nu) and the effective covariance is
    rebuilt.  Bit-for-bit reproducible for a given seed; wall-clock time
    covers the sampling loop only.
    """
    rng = np.random.default_rng(config.seed)
    tdiag = TuningDiagnostics()
    iters = int(config.iterations)
    burnin = int(config.burnin)
    p = data.p
    horseshoe = isinstance(prior, HorseshoePrior)

    beta0 = _initial_beta(config, data)
    trace = np.empty((iters, p))
    accepted = np.zeros(iters, dtype=bool)
    eta2_trace = np.empty((iters, p)) if horseshoe else None
    proposals = np.empty((iters, p)) if keep_step_trace else None
    log_alphas = np.empty(iters) if keep_step_trace else None
    uniforms = np.empty(iters) if keep_step_trace else None

    t_start = time.perf_counter()
    hs_state = HorseshoeState.initial(p) if horseshoe else None
    prior_params = _effective_prior(prior, hs_state, p)
    kernel = _PGKernel(data, config.tuning, tdiag)
    state = kernel.make_state(beta0)
    for t in range(iters):
        z = rng.standard_normal(p)
        u = rng.uniform()
        state, beta_star, acc, log_alpha = kernel.step(state, prior_params, z, u)
        trace[t] = state.beta
        accepted[t] = acc
        if keep_step_trace:
            proposals[t] = beta_star
            log_alphas[t] = log_alpha
            uniforms[t] = u
        if horseshoe:
            hs_state = horseshoe_update(state.beta, hs_state, prior.tau, rng)
            prior_params = _effective_prior(prior, hs_state, p)
            eta2_trace[t] = hs_state.eta2
    elapsed = time.perf_counter() - t_start

    step_trace = None
    if keep_step_trace:
        step_trace = StepTrace(proposals=proposals, log_alphas=log_alphas, uniforms=uniforms)
    return ChainOutput(
        draws=trace[burnin:],
        accepted=accepted,
        elapsed_seconds=elapsed,
        acceptance_rate=float(accepted.mean()),
        seed=int(config.seed),
        burnin=burnin,
        prior_trace=eta2_trace[burnin:] if horseshoe else None,
        full_draws=trace if keep_burnin else None,
        proposal_failures=kernel.proposal_failures,
        tuning_fallbacks=tdiag.closed_form_fallbacks,
        step_trace=step_trace,
    )


def is_run(data: Dataset, prior: PriorSpec, config: MHConfig) -> ISOutput:
    """Adaptive importance sampler: the importance density is the same
    PG-expectation Gaussian, re-anchored at the previous draw each
    iteration; log-weights are log pi_unnorm(draw) - log q(draw | anchor).

    Estimators downstream are self-normalized, so the posterior only needs
    to be known up to a constant.  Raises ``EstimationError`` when every
    retained weight underflows to zero.
    """
    rng = np.random.default_rng(config.seed)
    tdiag = TuningDiagnostics()
    iters = int(config.iterations)
    burnin = int(config.burnin)
    p = data.p
    horseshoe = isinstance(prior, HorseshoePrior)

    beta0 = _initial_beta(config, data)
    draws = np.empty((iters, p))
    log_w = np.empty(iters)
    failures = 0

    t_start = time.perf_counter()
    hs_state = HorseshoeState.initial(p) if horseshoe else None
    prior_params = _effective_prior(prior, hs_state, p)
    kernel = _PGKernel(data, config.tuning, tdiag)
    anchor = kernel.make_state(beta0)
    prop = None
    for t in range(iters):
        try:
            prop = kernel.forward(anchor, prior_params)
        except NumericError:
            failures += 1
            if prop is None:
                raise NumericError(
                    "importance proposal could not be built at the initial point"
                ) from None
            # keep sampling from the last good proposal
        z = rng.standard_normal(p)
        draw = prop.m + prop.L @ z
        eta_d = data.X @ draw
        loglik_d = _log_poisson_from_eta(eta_d, data)
        if loglik_d == -np.inf:
            log_w[t] = -np.inf
        else:
            log_w[t] = (
                loglik_d
                + log_gaussian_prior(draw, prior_params)
                - proposal_logpdf(prop, draw)
            )
        draws[t] = draw
        with np.errstate(over="ignore"):
            lam_d = np.exp(eta_d)
        anchor = _ChainState(
            draw, eta_d, lam_d, loglik_d,
            r_vector_for_lambdas(lam_d, config.tuning, tdiag),
        )
        if horseshoe:
            hs_state = horseshoe_update(draw, hs_state, prior.tau, rng)
            prior_params = _effective_prior(prior, hs_state, p)
    elapsed = time.perf_counter() - t_start

    log_w_ret = log_w[burnin:]
    if not np.any(np.isfinite(log_w_ret)):
        raise EstimationError(
            "all importance weights underflowed to zero; "
            "increase the distance bound d or the number of iterations"
        )
    return ISOutput(
        draws=draws[burnin:],
        log_weights=log_w_ret,
        ess_weights=ess_from_log_weights(log_w_ret),
        elapsed_seconds=elapsed,
        seed=int(config.seed),
        proposal_failures=failures,
        tuning_fallbacks=tdiag.closed_form_fallbacks,
    )
