"""Non-causal and causal conditional-mean estimators of the signal.

The non-causal estimate ``xbar = E[x | Y]`` uses every coordinate of the
observation. The causal (predictable) estimate ``xhat_i = E[a_i | v_1..v_{i-1}]``
is obtained by a left-to-right scan: with the step basis, the time filtration
of the Wiener space is generated by coordinate prefixes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .likelihood import PosteriorStats, eval_mc, exact_stats, posterior
from .montecarlo import McConfig, run_batches
from .priors import (
    Atomic,
    EnumerationUnavailable,
    GaussianDiagonal,
    GaussianLaw,
    ScaledShape,
    SignalPrior,
    prior_moments,
    reduce,
    sample_signal,
)
from .states import AtomicPosterior, GaussianPosterior, PosteriorState
from .wiener_space import Observation

DEFAULT_INNER = 2000


class UnsupportedPrior(TypeError):
    """The prior variant is not supported by this estimator."""


class NestedMonteCarloWarning(UserWarning):
    """Posterior quantities were estimated by nested Monte Carlo (bias unquantified)."""


def sample_joint(prior: SignalPrior, rng: np.random.Generator, size: int):
    """Independent signal and noise draws ``(X, Z)``, each ``(size, n)``.

    The signal is drawn first, so the noise stream does not depend on rho.
    """
    X = sample_signal(prior, rng, size)
    Z = rng.standard_normal(X.shape)
    return X, Z


def nested_stats(prior, rho, V, rng=None, inner: int = DEFAULT_INNER, inner_draws=None) -> PosteriorStats:
    """Self-normalized importance estimate of the posterior for every row of ``V``.

    One set of ``inner`` prior draws (or the given ``inner_draws``) is shared
    by all rows.
    """
    Xi = sample_signal(prior, rng, inner) if inner_draws is None else inner_draws
    lw = rho * (V @ Xi.T) - 0.5 * rho**2 * np.sum(Xi**2, axis=1)
    log_ell = logsumexp(lw, axis=1) - math.log(Xi.shape[0])
    q = softmax(lw, axis=1)
    xbar = q @ Xi
    second = q @ np.sum(Xi**2, axis=1)
    var_trace = np.maximum(second - np.sum(xbar**2, axis=1), 0.0)
    return PosteriorStats(log_ell, xbar, second, var_trace)


def posterior_stats(prior, rho, V, rng=None, inner: int = DEFAULT_INNER, inner_draws=None) -> PosteriorStats:
    """Exact posterior summaries when available, nested Monte Carlo otherwise."""
    try:
        return exact_stats(prior, rho, V)
    except EnumerationUnavailable:
        if rng is None and inner_draws is None:
            raise
        warnings.warn(
            "nested-MC bias unquantified: posterior of a sampler-only prior "
            "estimated by self-normalized importance sampling",
            NestedMonteCarloWarning,
            stacklevel=2,
        )
        return nested_stats(prior, rho, np.atleast_2d(V), rng, inner, inner_draws)


# -- non-causal --------------------------------------------------------------


def noncausal_estimate(prior: SignalPrior, obs: Observation, mc: McConfig | None = None):
    """``xbar = E[x | Y]``; exact where possible, self-normalized IS otherwise.

    At ``rho = 0`` the observation carries no information and the prior
    mean is returned (no division by rho happens anywhere).
    """
    if obs.rho == 0:
        return prior_moments(prior, mc).mean
    try:
        return exact_stats(prior, obs.rho, obs.v[None, :]).xbar[0]
    except EnumerationUnavailable:
        le = eval_mc(prior, obs, mc or McConfig())
        return le.grad_log / obs.rho


def noncausal_mmse(prior: SignalPrior, rho: float, mc: McConfig, method: str = "error"):
    """Monte-Carlo ``E|x - xbar|_H^2`` with batch-means stderr.

    ``method="energy"`` estimates ``E|x|^2 - E|xbar|^2`` instead.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if method not in ("error", "energy"):
        raise ValueError(f"unknown method {method!r}")

    def draw(rng, size):
        X, Z = sample_joint(prior, rng, size)
        return X, Z, rng

    def stats(d):
        X, Z, rng = d
        st = posterior_stats(prior, rho, rho * X + Z, rng)
        return {
            "err": np.sum((X - st.xbar) ** 2, axis=1),
            "gap": np.sum(X**2, axis=1) - np.sum(st.xbar**2, axis=1),
        }

    res = run_batches(mc, draw, stats)
    key = "err" if method == "error" else "gap"
    return float(res.mean(key)), float(res.stderr(key))


def _atomic_state(prior, obs):
    state = posterior(prior, obs)
    if not isinstance(state, AtomicPosterior):
        raise EnumerationUnavailable("conditional moments need an enumerable prior")
    return state


def conditional_moment(prior: SignalPrior, obs: Observation, hs) -> float:
    """``E[prod_i (h_i, x)_H | Y]`` by exact enumeration."""
    if len(hs) == 0:
        raise ValueError("need at least one direction")
    return _atomic_state(prior, obs).moment(hs)


def moment_gradient(prior: SignalPrior, obs: Observation, hs, h) -> float:
    """Directional derivative ``grad_h E[prod_i (h_i, x) | Y]`` in the observation.

    Uses ``grad_h q_k = rho q_k ((h, a_k) - (h, xbar))`` for the posterior weights.
    """
    state = _atomic_state(prior, obs)
    h = np.asarray(h, dtype=float)
    proj = np.prod([state.atoms @ np.asarray(g, float) for g in hs], axis=0)
    centered = state.atoms @ h - float(state.mean() @ h)
    return obs.rho * float(state.weights @ (proj * centered))


def moment_recursion_check(prior: SignalPrior, obs: Observation, hs) -> float:
    """Absolute residual of the conditional-moment recursion

        M_n = (h_n, xbar) M_{n-1} + rho^{-1} grad_{h_n} M_{n-1}.

    At ``rho = 0`` the derivative term is taken in its ``rho -> 0`` limit.
    """
    if len(hs) < 2:
        raise ValueError("the recursion needs at least two directions")
    state = _atomic_state(prior, obs)
    h_n = np.asarray(hs[-1], dtype=float)
    m_n = state.moment(hs)
    m_prev = state.moment(hs[:-1])
    lead = float(state.mean() @ h_n) * m_prev
    if obs.rho > 0:
        deriv = moment_gradient(prior, obs, hs[:-1], h_n) / obs.rho
    else:
        proj = np.prod([state.atoms @ np.asarray(g, float) for g in hs[:-1]], axis=0)
        deriv = float(state.weights @ (proj * (state.atoms @ h_n - float(state.mean() @ h_n))))
    return abs(m_n - (lead + deriv))


# -- causal ------------------------------------------------------------------


@dataclass(frozen=True)
class FilterTrajectory:
    """Causal estimates along the coordinate scan.

    ``predictable[i]`` uses observations ``0..i-1``; ``filtered[i]`` uses
    ``0..i``. ``states[i]`` is the posterior after observing ``0..i``.
    """

    predictable: np.ndarray
    filtered: np.ndarray
    predictable_var: np.ndarray
    states: tuple


def causal_batch(prior: SignalPrior, rho: float, V):
    """Vectorized causal scan over the rows of ``V``.

    Returns ``(predictable, filtered, predictable_var)``, each ``(m, n)``;
    ``predictable_var[:, i] = Var[a_i | v_0..v_{i-1}]``.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    prior = reduce(prior)
    if isinstance(prior, Atomic):
        A = prior.atoms  # (K, n)
        inc = rho * V[:, None, :] * A[None, :, :] - 0.5 * rho**2 * A[None, :, :] ** 2
        after = np.log(prior.weights)[None, :, None] + np.cumsum(inc, axis=2)
        before = np.concatenate(
            [np.broadcast_to(np.log(prior.weights)[None, :, None], (V.shape[0], A.shape[0], 1)),
             after[:, :, :-1]],
            axis=2,
        )
        q_before = softmax(before, axis=1)
        q_after = softmax(after, axis=1)
        pred = np.einsum("mkn,kn->mn", q_before, A)
        filt = np.einsum("mkn,kn->mn", q_after, A)
        dev = A[None, :, :] - pred[:, None, :]
        pvar = np.einsum("mkn,mkn->mn", q_before, dev**2)
        return pred, filt, pvar
    if isinstance(prior, GaussianDiagonal):
        g = 1.0 + rho**2 * prior.variances
        filt = prior.mean + rho * prior.variances * (V - rho * prior.mean) / g
        pred = np.broadcast_to(prior.mean, V.shape).copy()
        pvar = np.broadcast_to(prior.variances, V.shape).copy()
        return pred, filt, pvar
    if isinstance(prior, ScaledShape) and isinstance(prior.amplitude, GaussianLaw):
        s = prior.shape
        m, var = prior.amplitude.mean, prior.amplitude.var
        S_after = np.cumsum(V * s, axis=1)
        C_after = np.cumsum(s**2)
        S_before = np.concatenate([np.zeros((V.shape[0], 1)), S_after[:, :-1]], axis=1)
        C_before = np.concatenate([[0.0], C_after[:-1]])

        def amp(S, C):
            den = 1.0 + var * rho**2 * C
            return (m + var * rho * S) / den, var / den

        mean_b, var_b = amp(S_before, C_before)
        mean_a, _ = amp(S_after, C_after)
        pvar = np.broadcast_to(var_b * s**2, V.shape).copy()
        return mean_b * s, mean_a * s, pvar
    raise UnsupportedPrior(
        f"causal filtering is not available for {type(prior).__name__} priors"
    )


def causal_filter(prior: SignalPrior, obs: Observation) -> FilterTrajectory:
    """Left-to-right recursive Bayes (atomic) or Kalman-type recursion (Gaussian)."""
    pred, filt, pvar = causal_batch(prior, obs.rho, obs.v[None, :])
    red = reduce(prior)
    rho, v = obs.rho, obs.v
    states = []
    if isinstance(red, Atomic):
        logq = np.log(red.weights).copy()
        for i in range(red.n):
            logq += rho * red.atoms[:, i] * v[i] - 0.5 * rho**2 * red.atoms[:, i] ** 2
            q = softmax(logq)
            states.append(AtomicPosterior(red.atoms, q / q.sum()))
    elif isinstance(red, GaussianDiagonal):
        g = 1.0 + rho**2 * red.variances
        post_mean = red.mean + rho * red.variances * (v - rho * red.mean) / g
        post_var = red.variances / g
        for i in range(red.n):
            k = i + 1
            mean = np.concatenate([post_mean[:k], red.mean[k:]])
            var = np.concatenate([post_var[:k], red.variances[k:]])
            states.append(GaussianPosterior(mean, var))
    else:
        s = red.shape
        norm = math.sqrt(float(s @ s))
        for i in range(red.n):
            amp_mean, amp_var = _amplitude_posterior(red, rho, v[: i + 1])
            states.append(
                GaussianPosterior(amp_mean * s, np.zeros(red.n), s / norm, amp_var * norm**2)
            )
    return FilterTrajectory(pred[0], filt[0], pvar[0], tuple(states))


def _amplitude_posterior(prior: ScaledShape, rho, v_prefix):
    s = prior.shape[: v_prefix.size]
    m, var = prior.amplitude.mean, prior.amplitude.var
    den = 1.0 + var * rho**2 * float(s @ s)
    return (m + var * rho * float(v_prefix @ s)) / den, var / den


def causal_mmse(prior: SignalPrior, rho: float, mc: McConfig, rao_blackwell: bool = True, draw=None):
    """Monte-Carlo ``E|x - xhat|_H^2`` along the predictable trajectory.

    With ``rao_blackwell`` (default) each sample contributes
    ``sum_i Var[a_i | v_<i]`` instead of ``sum_i (a_i - xhat_i)^2``; both have
    the same mean, the former far less variance.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    draw = draw or (lambda rng, size: sample_joint(prior, rng, size))

    def stats(d):
        X, Z = d
        pred, _, pvar = causal_batch(prior, rho, rho * X + Z)
        return {"rb": pvar.sum(axis=1), "plain": np.sum((X - pred) ** 2, axis=1)}

    res = run_batches(mc, draw, stats)
    key = "rb" if rao_blackwell else "plain"
    return float(res.mean(key)), float(res.stderr(key))


def is_causal_supported(prior: SignalPrior) -> bool:
    red = reduce(prior)
    return isinstance(red, (Atomic, GaussianDiagonal)) or (
        isinstance(red, ScaledShape) and isinstance(red.amplitude, GaussianLaw)
    )


__all__ = [
    "FilterTrajectory",
    "NestedMonteCarloWarning",
    "PosteriorState",
    "UnsupportedPrior",
    "causal_batch",
    "causal_filter",
    "causal_mmse",
    "conditional_moment",
    "moment_gradient",
    "moment_recursion_check",
    "noncausal_estimate",
    "noncausal_mmse",
    "posterior_stats",
    "sample_joint",
]
