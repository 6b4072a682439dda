"""Finite-dimensional Malliavin calculus in the step-basis coordinates.

A Wiener functional is a function of the noise coordinates ``v``. Its
gradient is the vector of partial derivatives, the divergence of an
H-valued field ``u`` is ``delta u = <v, u(v)> - trace grad u(v)`` and the
number (Ornstein-Uhlenbeck) operator is ``L = delta grad``. Under a shifted
measure with density ``l`` the divergence becomes
``delta~ u = delta u - (grad log l, u)_H``.

Analytic gradients/traces are used when supplied; central finite
differences are available as fallbacks and as cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .likelihood import LikelihoodEval, eval_exact, exact_stats
from .priors import SignalPrior
from .wiener_space import Observation, pair

FD_STEP = 1e-5
FD_STEP_SECOND = 1e-4


class MissingDerivative(ValueError):
    """An operator needs an analytic derivative the functional does not provide."""


@dataclass(frozen=True)
class SmoothFunctional:
    """A functional with optional analytic derivatives.

    ``batch_evaluator``, when given, maps a stack of points ``(m, n)`` to
    ``(m,)`` values and lets finite differences evaluate all stencil points
    in one call.
    """

    evaluator: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_trace: Optional[Callable[[np.ndarray], float]] = None
    batch_evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, v):
        return self.evaluator(np.asarray(v, dtype=float))


def _values(F, P) -> np.ndarray:
    batch = getattr(F, "batch_evaluator", None)
    if batch is not None:
        return np.asarray(batch(P), dtype=float)
    return np.array([F(p) for p in P], dtype=float)


@dataclass(frozen=True)
class VectorField:
    evaluator: Callable[[np.ndarray], np.ndarray]
    jacobian_trace: Optional[Callable[[np.ndarray], float]] = None

    def __call__(self, v):
        return self.evaluator(np.asarray(v, dtype=float))


def gradient_fd(F, v, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient along each basis direction."""
    if step <= 0:
        raise ValueError("step must be positive")
    v = np.asarray(v, dtype=float)
    E = step * np.eye(v.size)
    f = _values(F, np.concatenate([v + E, v - E]))
    return (f[: v.size] - f[v.size:]) / (2 * step)


def hess_trace_fd(F, v, step: float = FD_STEP_SECOND) -> float:
    """Sum of central second differences, ``sum_i d^2 F / dv_i^2``."""
    if step <= 0:
        raise ValueError("step must be positive")
    v = np.asarray(v, dtype=float)
    E = step * np.eye(v.size)
    f = _values(F, np.concatenate([v[None, :], v + E, v - E]))
    return float(np.sum(f[1: v.size + 1] - 2.0 * f[0] + f[v.size + 1:]) / step**2)


def jacobian_trace_fd(u, v, step: float = FD_STEP) -> float:
    """``trace grad u = sum_i d u_i / d v_i`` by central differences."""
    v = np.asarray(v, dtype=float)
    total = 0.0
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = step
        total += (u(v + e)[i] - u(v - e)[i]) / (2 * step)
    return total


def divergence(u: VectorField, v, fd_trace: bool = False) -> float:
    """Skorohod integral ``delta u(v) = <v, u(v)> - trace grad u(v)``.

    Needs ``u.jacobian_trace`` unless ``fd_trace`` asks for a finite-difference trace.
    """
    v = np.asarray(v, dtype=float)
    if u.jacobian_trace is not None:
        tr = u.jacobian_trace(v)
    elif fd_trace:
        tr = jacobian_trace_fd(u, v)
    else:
        raise MissingDerivative("divergence needs the Jacobian trace of the field")
    return float(pair(v, u(v))) - tr


def number_operator(F: SmoothFunctional, v) -> float:
    """``L F = delta grad F = <v, grad F(v)> - trace hess F(v)``."""
    if F.gradient is None or F.hess_trace is None:
        raise MissingDerivative("number operator needs analytic gradient and Hessian trace")
    v = np.asarray(v, dtype=float)
    return float(pair(v, F.gradient(v))) - F.hess_trace(v)


def tilde_divergence(u: VectorField, ell, v, fd_trace: bool = False) -> float:
    """Divergence under the measure ``l d mu_W``: ``delta u - (grad log l, u)_H``.

    ``ell`` maps ``v`` to a :class:`LikelihoodEval`. For signal-plus-noise
    likelihoods ``l > 0`` everywhere, so no indicator is needed.
    """
    v = np.asarray(v, dtype=float)
    le: LikelihoodEval = ell(v)
    if not le.value > 0:
        raise FloatingPointError("likelihood vanished; shifted divergence undefined")
    return divergence(u, v, fd_trace) - float(le.grad_log @ u(v))


# -- standard functionals and fields ------------------------------------------


def linear_functional(h) -> SmoothFunctional:
    """``F(v) = <v, h>``: first chaos, ``grad F = h``."""
    h = np.asarray(h, dtype=float)
    return SmoothFunctional(
        lambda v: float(pair(v, h)),
        lambda v: h.copy(),
        lambda v: 0.0,
    )


def second_chaos(h) -> SmoothFunctional:
    """``F(v) = <v, h>^2 - |h|^2`` (second Hermite functional)."""
    h = np.asarray(h, dtype=float)
    hh = float(h @ h)
    return SmoothFunctional(
        lambda v: float(pair(v, h)) ** 2 - hh,
        lambda v: 2.0 * float(pair(v, h)) * h,
        lambda v: 2.0 * hh,
    )


def constant_field(h) -> VectorField:
    h = np.asarray(h, dtype=float)
    return VectorField(lambda v: h.copy(), lambda v: 0.0)


def scaled_field(f: SmoothFunctional, u: VectorField) -> VectorField:
    """``f(v) u(v)``; Jacobian trace ``(grad f, u) + f trace grad u``."""
    if f.gradient is None or u.jacobian_trace is None:
        trace = None
    else:
        def trace(v):
            return float(f.gradient(v) @ u(v)) + f(v) * u.jacobian_trace(v)
    return VectorField(lambda v: f(v) * u(v), trace)


def log_likelihood_functional(prior: SignalPrior, rho: float) -> SmoothFunctional:
    """``log l`` with gradient ``rho xbar`` and Hessian trace ``rho^2 Var``."""
    return SmoothFunctional(
        lambda v: eval_exact(prior, Observation(v, rho)).log_value,
        lambda v: eval_exact(prior, Observation(v, rho)).grad_log,
        lambda v: eval_exact(prior, Observation(v, rho)).trace_hess_log,
        lambda V: exact_stats(prior, rho, V).log_ell,
    )


def likelihood_functional(prior: SignalPrior, rho: float) -> SmoothFunctional:
    """``l`` itself: ``grad l = rho l xbar``, ``trace hess l = rho^2 l E[|x|^2 | Y]``."""

    def parts(v):
        st = exact_stats(prior, rho, v[None, :])
        return np.exp(st.log_ell[0]), st.xbar[0], st.second[0]

    def grad(v):
        ell, xbar, _ = parts(v)
        return rho * ell * xbar

    def trace(v):
        ell, _, second = parts(v)
        return rho**2 * ell * second

    return SmoothFunctional(lambda v: parts(v)[0], grad, trace)


def posterior_mean_field(prior: SignalPrior, rho: float) -> VectorField:
    """``xbar(v) = E[x | Y = v]``.

    Its Jacobian is ``rho Cov[x | Y]``; the trace is taken from the
    centered posterior spread, independently of :func:`eval_exact`.
    """

    def field(v):
        return exact_stats(prior, rho, v[None, :]).xbar[0]

    def trace(v):
        return rho * float(exact_stats(prior, rho, v[None, :]).var_trace[0])

    return VectorField(field, trace)
