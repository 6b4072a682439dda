"""The likelihood ratio ``l = d mu_Y / d mu_W`` and its derivatives.

For a signal law ``mu_X`` the Cameron-Martin formula gives

    l(v) = E_X exp(rho <v, x> - rho^2 |x|_H^2 / 2),

whose gradient and Hessian are posterior moments:

    grad log l = rho * E[x | Y],
    (h, hess log l h) = rho^2 Var[(h, x)_H | Y].

Atomic priors (and scaled shapes with atomic amplitude) are handled by an
exact, max-shifted log-sum-exp; Gaussian priors by the conjugate closed form;
anything else by importance sampling over prior draws (:func:`eval_mc`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .montecarlo import McConfig, batch_stderr, map_batches
from .priors import (
    Atomic,
    EnumerationUnavailable,
    GaussianDiagonal,
    GaussianLaw,
    ScaledShape,
    SignalPrior,
    reduce,
    sample_signal,
)
from .states import AtomicPosterior, GaussianPosterior
from .wiener_space import Observation


class WeightUnderflow(FloatingPointError):
    """All importance weights underflowed; the estimate would silently be zero."""


@dataclass(frozen=True)
class LikelihoodEval:
    value: float
    log_value: float
    grad_log: np.ndarray
    trace_hess_log: float
    stderr_value: float = 0.0
    stderr_grad_log: float = 0.0
    stderr_trace: float = 0.0

    @property
    def exact(self) -> bool:
        return self.stderr_value == 0.0 and self.stderr_grad_log == 0.0


@dataclass(frozen=True)
class PosteriorStats:
    """Vectorized posterior summaries for a stack of observations ``V`` (m, n).

    ``second`` is ``E[|x|_H^2 | Y]``; ``var_trace`` is the centered
    ``E[|x - xbar|_H^2 | Y]`` (computed separately, not as a difference).
    """

    log_ell: np.ndarray
    xbar: np.ndarray
    second: np.ndarray
    var_trace: np.ndarray


def _atomic_logits(prior: Atomic, rho: float, V: np.ndarray) -> np.ndarray:
    energies = np.sum(prior.atoms**2, axis=1)
    return np.log(prior.weights) + rho * (V @ prior.atoms.T) - 0.5 * rho**2 * energies


def _scalar_gaussian(m, s, rho, y):
    """Conjugate scalar channel ``y = rho b + z``, ``b ~ N(m, s)``.

    Returns ``(log l, posterior mean, posterior variance)``.
    """
    g = 1.0 + rho**2 * s
    r = y - rho * m
    log_ell = rho * m * y - 0.5 * rho**2 * m**2 + rho**2 * s * r**2 / (2 * g) - 0.5 * np.log(g)
    return log_ell, m + rho * s * r / g, s / g


def exact_stats(prior: SignalPrior, rho: float, V) -> PosteriorStats:
    """Closed-form log-likelihood and posterior moments for every row of ``V``."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    prior = reduce(prior)
    if isinstance(prior, Atomic):
        if V.shape[1] != prior.n:
            raise ValueError(f"observation has {V.shape[1]} coordinates, prior {prior.n}")
        logits = _atomic_logits(prior, rho, V)
        log_ell = logsumexp(logits, axis=1)
        q = np.exp(logits - log_ell[:, None])
        xbar = q @ prior.atoms
        second = q @ np.sum(prior.atoms**2, axis=1)
        dev = prior.atoms[None, :, :] - xbar[:, None, :]
        var_trace = np.sum(q * np.sum(dev**2, axis=2), axis=1)
        return PosteriorStats(log_ell, xbar, second, var_trace)
    if isinstance(prior, GaussianDiagonal):
        if V.shape[1] != prior.n:
            raise ValueError(f"observation has {V.shape[1]} coordinates, prior {prior.n}")
        lg, mean, var = _scalar_gaussian(prior.mean, prior.variances, rho, V)
        var_trace = np.broadcast_to(np.sum(var), (V.shape[0],)).copy()
        return PosteriorStats(lg.sum(axis=1), mean, var_trace + np.sum(mean**2, axis=1), var_trace)
    if isinstance(prior, ScaledShape) and isinstance(prior.amplitude, GaussianLaw):
        if V.shape[1] != prior.n:
            raise ValueError(f"observation has {V.shape[1]} coordinates, prior {prior.n}")
        # sufficient statistic: projection on the unit direction of the shape
        norm = math.sqrt(float(prior.shape @ prior.shape))
        u = prior.shape / norm
        amp = prior.amplitude
        lg, mb, vb = _scalar_gaussian(norm * amp.mean, norm**2 * amp.var, rho, V @ u)
        xbar = np.outer(mb, u)
        var_trace = np.full(V.shape[0], vb)
        return PosteriorStats(lg, xbar, var_trace + mb**2, var_trace)
    raise EnumerationUnavailable(
        f"no closed-form likelihood for {type(prior).__name__} priors; use eval_mc"
    )


def eval_exact(prior: SignalPrior, obs: Observation) -> LikelihoodEval:
    """Exact ``l(v)``, ``log l``, ``grad log l`` and ``trace hess log l``."""
    st = exact_stats(prior, obs.rho, obs.v[None, :])
    log_value = float(st.log_ell[0])
    xbar = st.xbar[0]
    trace = obs.rho**2 * (float(st.second[0]) - float(xbar @ xbar))
    return LikelihoodEval(
        value=math.exp(log_value),
        log_value=log_value,
        grad_log=obs.rho * xbar,
        trace_hess_log=trace,
    )


def hessian_log(prior: SignalPrior, obs: Observation) -> np.ndarray:
    """Full Hessian of ``log l`` at ``obs``: ``rho^2 Cov[x | Y]``."""
    state = posterior(prior, obs)
    if isinstance(state, AtomicPosterior):
        d = state.atoms - state.mean()
        cov = (state.weights[:, None] * d).T @ d
    else:
        cov = state.covariance()
    return obs.rho**2 * cov


def posterior(prior: SignalPrior, obs: Observation):
    """Conditional law of the signal given ``obs``."""
    red = reduce(prior)
    if isinstance(red, Atomic):
        logits = _atomic_logits(red, obs.rho, obs.v[None, :])[0]
        q = np.exp(logits - logsumexp(logits))
        q = q / q.sum()
        return AtomicPosterior(red.atoms, q)
    if isinstance(red, GaussianDiagonal):
        _, mean, var = _scalar_gaussian(red.mean, red.variances, obs.rho, obs.v)
        return GaussianPosterior(mean, var)
    if isinstance(red, ScaledShape) and isinstance(red.amplitude, GaussianLaw):
        st = exact_stats(red, obs.rho, obs.v[None, :])
        u = red.shape / math.sqrt(float(red.shape @ red.shape))
        return GaussianPosterior(st.xbar[0], np.zeros(red.n), u, float(st.var_trace[0]))
    raise EnumerationUnavailable(
        f"no closed-form posterior for {type(prior).__name__} priors"
    )


def eval_mc(prior: SignalPrior, obs: Observation, mc: McConfig) -> LikelihoodEval:
    """Importance-sampling estimate of ``l(v)`` from prior draws.

    ``l_hat = mean_j exp(rho <v, x_j> - rho^2 |x_j|^2 / 2)`` is unbiased for
    ``l``; the gradient and Hessian trace use self-normalized weights.
    Standard errors are batch means over ``mc.batches`` batches.
    """
    rho, v = obs.rho, obs.v
    size = mc.batch_size

    def one(rng):
        X = sample_signal(prior, rng, size)
        lw = rho * (X @ v) - 0.5 * rho**2 * np.sum(X**2, axis=1)
        L = logsumexp(lw)
        w = np.exp(lw - L)
        xbar = w @ X
        return L - math.log(size), xbar, float(w @ np.sum(X**2, axis=1))

    per = map_batches(mc, one)
    logs = np.array([p[0] for p in per])
    xbars = np.stack([p[1] for p in per])
    seconds = np.array([p[2] for p in per])

    log_value = float(logsumexp(logs) - math.log(len(logs)))
    value = math.exp(log_value)
    if value == 0.0 or not np.isfinite(log_value):
        raise WeightUnderflow(
            f"likelihood estimate underflowed (log l_hat = {log_value:.6g})"
        )
    rel = np.exp(logs - logs.max())
    stderr_value = float(batch_stderr(rel) * math.exp(logs.max()))
    # combine batches with their likelihood mass; spread of batch ratios gives stderr
    mass = rel / rel.sum()
    xbar = mass @ xbars
    second = float(mass @ seconds)
    traces = rho**2 * (seconds - np.sum(xbars**2, axis=1))
    return LikelihoodEval(
        value=value,
        log_value=log_value,
        grad_log=rho * xbar,
        trace_hess_log=rho**2 * (second - float(xbar @ xbar)),
        stderr_value=stderr_value,
        stderr_grad_log=float(rho * np.linalg.norm(batch_stderr(xbars))),
        stderr_trace=float(batch_stderr(traces)),
    )
