"""Reference values computed without Monte Carlo.

* closed forms for the random-constant Gaussian signal ``x'(t) = A``,
  ``A ~ N(0, sigma2)`` observed on ``[0, T]``;
* Gauss-Hermite quadrature for scalar channels ``v = rho A + xi``;
* tensor-product Gauss-Hermite quadrature for atomic priors with n <= 3.

Nothing here calls into the likelihood/estimator code paths: the posterior
and the likelihood ratio are re-derived locally so that a bug there cannot
hide in an oracle comparison.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .priors import Atomic, AtomicLaw, GaussianLaw, reduce


class QuadratureNonConvergence(ArithmeticError):
    pass


class QuadratureBudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Probabilists' Gauss-Hermite rule: ``E f(xi) ~ sum_j weights_j f(nodes_j)``."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


def gauss_hermite(order: int) -> QuadratureRule:
    if order < 1:
        raise ValueError("order must be positive")
    x, w = np.polynomial.hermite_e.hermegauss(order)
    return QuadratureRule(x, w / math.sqrt(2.0 * math.pi), order)


@dataclass(frozen=True)
class GaussianOracle:
    I: float
    mmse_nc: float
    mmse_c_integral: float
    rel_ent: float
    E_xbar2: float
    E_xhat2: float
    energy: float
    rho: float

    @property
    def lsi_gap(self) -> float:
        """``E_1 |grad log l|^2 / 2 - E_1 log l``, with ``|grad log l|^2 = rho^2 |xbar|^2``."""
        return self.rho**2 * self.E_xbar2 / 2 - self.rel_ent


def gaussian_closed_form(sigma2: float, T: float, rho: float) -> GaussianOracle:
    """Random-constant signal ``x'(t) = A``, ``A ~ N(0, sigma2)``, on ``[0, T]``.

    With ``E = sigma2 T`` (signal energy) and ``snr = rho^2 E``:

    * ``I = log(1 + snr) / 2``
    * ``mmse_nc = E / (1 + snr)``
    * ``mmse_c = int_0^T sigma2 / (1 + rho^2 sigma2 t) dt = log(1 + snr) / rho^2``
    * ``E_1 log l = (snr - log(1 + snr)) / 2``
    """
    if sigma2 < 0 or T <= 0 or rho < 0:
        raise ValueError("need sigma2 >= 0, T > 0, rho >= 0")
    energy = sigma2 * T
    snr = rho**2 * energy
    I = 0.5 * math.log1p(snr)
    mmse_nc = energy / (1.0 + snr)
    mmse_c = math.log1p(snr) / rho**2 if rho > 0 else energy
    rel_ent = 0.5 * (snr - math.log1p(snr))
    return GaussianOracle(
        I=I,
        mmse_nc=mmse_nc,
        mmse_c_integral=mmse_c,
        rel_ent=rel_ent,
        E_xbar2=energy - mmse_nc,
        E_xhat2=energy - mmse_c,
        energy=energy,
        rho=rho,
    )


def linear_filter_oracle(sigma2: float, rho: float, t, y_t):
    """Continuous-time filter for ``dy = rho A dt + dw``: ``E[A | y_s, s <= t]`` and its variance."""
    t = np.asarray(t, dtype=float)
    den = 1.0 + rho**2 * sigma2 * t
    return rho * sigma2 * np.asarray(y_t) / den, sigma2 / den


@dataclass(frozen=True)
class ScalarOracle:
    I: float
    mmse_nc: float
    E_log_ell: float
    E_xbar2: float
    E_trace: float
    order: int
    doubling_delta: float

    @property
    def ell_moments(self) -> dict:
        return {"E_log_ell": self.E_log_ell, "E_xbar2": self.E_xbar2, "E_trace": self.E_trace}


def _scalar_atomic(values, weights, rho, rule):
    a = np.asarray(values, float)
    p = np.asarray(weights, float)
    # v[k, j] = rho a_k + xi_j
    v = rho * a[:, None] + rule.nodes[None, :]
    logit = np.log(p)[None, None, :] + rho * v[..., None] * a - 0.5 * rho**2 * a**2
    log_ell = logsumexp(logit, axis=2)
    post = np.exp(logit - log_ell[..., None])
    mean = post @ a
    var = post @ a**2 - mean**2
    log_cond = rho * a[:, None] * v - 0.5 * rho**2 * (a**2)[:, None]
    E = lambda f: float(p @ (f @ rule.weights))  # noqa: E731
    return np.array([
        E(log_cond - log_ell),
        E((a[:, None] - mean) ** 2),
        E(log_ell),
        E(mean**2),
        rho**2 * E(var),
    ])


def _scalar_gaussian(m, s, rho, rule):
    A = m + math.sqrt(s) * rule.nodes  # (i,)
    v = rho * A[:, None] + rule.nodes[None, :]  # (i, j)
    W = np.outer(rule.weights, rule.weights)
    g = 1.0 + rho**2 * s
    log_py = -0.5 * math.log(g) - (v - rho * m) ** 2 / (2 * g)  # minus log(2 pi)/2, cancels
    log_phi = -0.5 * v**2
    log_ell = log_py - log_phi
    mean = m + rho * s * (v - rho * m) / g
    var = s / g
    log_cond = rho * A[:, None] * v - 0.5 * rho**2 * (A**2)[:, None]
    E = lambda f: float(np.sum(W * f))  # noqa: E731
    return np.array([
        E(log_cond - log_ell),
        E((A[:, None] - mean) ** 2),
        E(log_ell),
        E(mean**2),
        rho**2 * var,
    ])


def quadrature_scalar(law, rho: float, order: int = 64, tol: float = 1e-6,
                      max_order: int = 256) -> ScalarOracle:
    """Mutual information and MMSE of ``v = rho A + xi`` by Gauss-Hermite integration.

    The order is doubled until two successive results differ by at most
    ``tol`` (values at the higher order are returned). If ``max_order`` is
    reached first, :class:`QuadratureNonConvergence` is raised.
    """
    if order < 32:
        raise ValueError("order must be at least 32")
    if isinstance(law, AtomicLaw):
        fn = lambda rule: _scalar_atomic(law.values, law.weights, rho, rule)  # noqa: E731
    elif isinstance(law, GaussianLaw):
        fn = lambda rule: _scalar_gaussian(law.mean, law.var, rho, rule)  # noqa: E731
    else:
        raise TypeError(f"unsupported amplitude law {type(law).__name__}")
    lo = fn(gauss_hermite(order))
    while True:
        hi = fn(gauss_hermite(2 * order))
        delta = float(np.max(np.abs(hi - lo)))
        order *= 2
        if delta <= tol:
            return ScalarOracle(*map(float, hi), order=order, doubling_delta=delta)
        if 2 * order > max_order:
            raise QuadratureNonConvergence(
                f"order {order // 2} -> {order} changed the result by {delta:.3g}"
            )
        lo = hi


@dataclass(frozen=True)
class TensorOracle:
    I: float
    mmse_nc: float
    rel_ent: float
    order: int


def tensor_quadrature(prior, rho: float, order: int = 40, max_nodes: int = 10**6) -> TensorOracle:
    """Brute-force tensor Gauss-Hermite integration over the noise for n <= 3."""
    red = reduce(prior)
    if not isinstance(red, Atomic):
        raise TypeError("tensor quadrature needs an atomic prior")
    A, p = red.atoms, red.weights
    n = A.shape[1]
    if n > 3:
        raise QuadratureBudgetExceeded(f"n = {n} > 3 coordinates")
    if order**n > max_nodes:
        raise QuadratureBudgetExceeded(f"{order}^{n} nodes exceed the budget {max_nodes}")
    rule = gauss_hermite(order)
    xi = np.array(list(itertools.product(rule.nodes, repeat=n)))
    wt = np.prod(np.array(list(itertools.product(rule.weights, repeat=n))), axis=1)
    energies = np.sum(A**2, axis=1)
    I = mmse = rel = 0.0
    for a, pk, ek in zip(A, p, energies):
        v = rho * a + xi
        logit = np.log(p) + rho * (v @ A.T) - 0.5 * rho**2 * energies
        log_ell = logsumexp(logit, axis=1)
        post = np.exp(logit - log_ell[:, None])
        mean = post @ A
        log_cond = rho * (v @ a) - 0.5 * rho**2 * ek
        I += pk * float(wt @ (log_cond - log_ell))
        mmse += pk * float(wt @ np.sum((a - mean) ** 2, axis=1))
        rel += pk * float(wt @ log_ell)
    return TensorOracle(float(I), float(mmse), float(rel), order)


def golden_records() -> list[dict]:
    """Reference values committed under ``tests/data/golden_oracle.json``."""
    records = []
    g = gaussian_closed_form(1.0, 1.0, 1.0)
    params = {"sigma2": 1.0, "T": 1.0, "rho": 1.0}
    for q in ("I", "mmse_nc", "mmse_c_integral", "rel_ent", "E_xbar2", "E_xhat2", "lsi_gap"):
        records.append({
            "model": "gaussian_random_constant", "params": params, "quantity": q,
            "value": getattr(g, q), "method": "closed_form", "order": None,
        })
    law = AtomicLaw.symmetric_sign()
    for rho in (0.5, 1.0, 2.0):
        o = quadrature_scalar(law, rho, 64)
        for q in ("I", "mmse_nc", "E_log_ell", "E_xbar2", "E_trace"):
            records.append({
                "model": "pm1_scalar", "params": {"rho": rho}, "quantity": q,
                "value": getattr(o, q), "method": "gauss_hermite", "order": o.order,
                "doubling_delta": o.doubling_delta,
            })
    return records
