"""Conditional laws of the signal given the observation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AtomicPosterior:
    """Posterior weights ``q`` over the rows of ``atoms``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.weights, dtype=float)
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise ValueError("posterior weights must be nonnegative and sum to 1")

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.atoms**2, axis=1))

    def variance_trace(self) -> float:
        d = self.atoms - self.mean()
        return float(self.weights @ np.sum(d**2, axis=1))

    def moment(self, hs) -> float:
        """``E[prod_i (h_i, x)_H | Y]``."""
        proj = np.prod([self.atoms @ np.asarray(h, float) for h in hs], axis=0)
        return float(self.weights @ proj)


@dataclass(frozen=True)
class GaussianPosterior:
    """Posterior ``N(mean, cov)`` with ``cov = diag(variances) + rank_one_var * u u^T``.

    The rank-one part carries the amplitude uncertainty of a scaled shape
    (``u`` has unit H-norm); independent-coordinate priors use the diagonal.
    """

    mean_vector: np.ndarray
    variances: np.ndarray
    direction: np.ndarray | None = None
    rank_one_var: float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.variances) < 0) or self.rank_one_var < 0:
            raise ValueError("posterior variances must be nonnegative")

    def mean(self) -> np.ndarray:
        return self.mean_vector

    def covariance(self) -> np.ndarray:
        cov = np.diag(self.variances).astype(float)
        if self.direction is not None:
            cov += self.rank_one_var * np.outer(self.direction, self.direction)
        return cov

    def variance_trace(self) -> float:
        return float(np.sum(self.variances) + self.rank_one_var)

    def second_moment(self) -> float:
        return self.variance_trace() + float(self.mean_vector @ self.mean_vector)


@dataclass(frozen=True)
class ParticlePosterior:
    """Self-normalized importance sample of the posterior."""

    particles: np.ndarray
    weights: np.ndarray

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.particles**2, axis=1))

    def variance_trace(self) -> float:
        d = self.particles - self.mean()
        return float(self.weights @ np.sum(d**2, axis=1))


PosteriorState = AtomicPosterior | GaussianPosterior | ParticlePosterior
