"""Signal laws on the Cameron-Martin space.

Four variants are supported:

* :class:`Atomic` -- finite mixture of point masses (exactly enumerable);
* :class:`GaussianDiagonal` -- independent Gaussian coordinates;
* :class:`ScaledShape` -- ``x = A * shape`` with a scalar amplitude law;
* :class:`SamplerOnly` -- an opaque sampler, usable by Monte-Carlo paths only.

For :class:`SamplerOnly` priors the exponential-moment condition
``E exp(alpha (x, h)_H) < inf`` cannot be checked and is the caller's
responsibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .montecarlo import McConfig, run_batches

WEIGHT_ATOL = 1e-12


class EnumerationUnavailable(TypeError):
    """Raised when an operation needs the exact finite support of a prior."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_weights(w: np.ndarray):
    if w.ndim != 1 or w.size < 1:
        raise ValueError("need at least one weight")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    if abs(w.sum() - 1.0) > WEIGHT_ATOL:
        raise ValueError(f"weights sum to {w.sum()!r}, not 1")


@dataclass(frozen=True)
class AtomicLaw:
    """Finite scalar law ``P(A = values[k]) = weights[k]``."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values, weights = _frozen(self.values), _frozen(self.weights)
        if values.shape != weights.shape:
            raise ValueError("values and weights differ in length")
        _check_weights(weights)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def symmetric_sign(cls) -> "AtomicLaw":
        return cls([-1.0, 1.0], [0.5, 0.5])

    def moments(self) -> tuple[float, float]:
        return float(self.weights @ self.values), float(self.weights @ self.values**2)

    def sample(self, rng, size):
        idx = rng.choice(self.values.size, size=size, p=self.weights)
        return self.values[idx]


@dataclass(frozen=True)
class GaussianLaw:
    """Scalar law N(mean, var)."""

    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if self.var < 0:
            raise ValueError("variance must be nonnegative")

    def moments(self) -> tuple[float, float]:
        return self.mean, self.var + self.mean**2

    def sample(self, rng, size):
        return self.mean + np.sqrt(self.var) * rng.standard_normal(size)


AmplitudeLaw = Union[AtomicLaw, GaussianLaw]


@dataclass(frozen=True)
class Atomic:
    """Mixture of point masses: rows of ``atoms`` with probabilities ``weights``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = _frozen(np.atleast_2d(self.atoms))
        weights = _frozen(self.weights)
        _check_weights(weights)
        if atoms.shape[0] != weights.size:
            raise ValueError(
                f"{atoms.shape[0]} atoms but {weights.size} weights"
            )
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def point_mass(cls, a) -> "Atomic":
        return cls(np.atleast_2d(a), [1.0])

    @property
    def n(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class GaussianDiagonal:
    """Independent coordinates ``a_i ~ N(mean_i, variances_i)``."""

    mean: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        mean, var = _frozen(self.mean), _frozen(self.variances)
        if mean.ndim != 1 or mean.shape != var.shape:
            raise ValueError("mean and variances must be 1-D of equal length")
        if np.any(var < 0):
            raise ValueError("variances must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variances", var)

    @property
    def n(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class ScaledShape:
    """Signal ``x = A * shape`` with scalar amplitude ``A`` drawn from ``amplitude``.

    With ``shape = basis.constant_shape()`` this is the random-constant
    signal ``x'(t) = A``.
    """

    shape: np.ndarray
    amplitude: AmplitudeLaw

    def __post_init__(self):
        shape = _frozen(self.shape)
        if shape.ndim != 1:
            raise ValueError("shape must be a 1-D coefficient vector")
        if not np.sum(shape**2) > 0:
            raise ValueError("shape must have positive H-norm")
        object.__setattr__(self, "shape", shape)

    @property
    def n(self) -> int:
        return self.shape.size


@dataclass(frozen=True)
class SamplerOnly:
    """Opaque prior: ``sampler(rng, size)`` returns a ``(size, n)`` array."""

    sampler: Callable[[np.random.Generator, int], np.ndarray]
    n: int
    name: str = "sampler"


SignalPrior = Union[Atomic, GaussianDiagonal, ScaledShape, SamplerOnly]


@dataclass(frozen=True)
class PriorMoments:
    mean: np.ndarray
    energy: float
    exact: bool
    energy_stderr: float = 0.0

    @property
    def variance_trace(self) -> float:
        return self.energy - float(self.mean @ self.mean)


def reduce(prior: SignalPrior) -> SignalPrior:
    """Rewrite a scaled shape with atomic amplitude as the equivalent :class:`Atomic`."""
    if isinstance(prior, ScaledShape) and isinstance(prior.amplitude, AtomicLaw):
        amp = prior.amplitude
        return Atomic(np.outer(amp.values, prior.shape), amp.weights)
    return prior


def is_enumerable(prior: SignalPrior) -> bool:
    return isinstance(reduce(prior), Atomic)


def is_gaussian(prior: SignalPrior) -> bool:
    return isinstance(prior, GaussianDiagonal) or (
        isinstance(prior, ScaledShape) and isinstance(prior.amplitude, GaussianLaw)
    )


def sample_signal(prior: SignalPrior, rng: np.random.Generator, size: int | None = None):
    """Draw from the prior; one HVector, or a ``(size, n)`` stack."""
    m = 1 if size is None else size
    if isinstance(prior, Atomic):
        idx = rng.choice(prior.weights.size, size=m, p=prior.weights)
        out = prior.atoms[idx]
    elif isinstance(prior, GaussianDiagonal):
        out = prior.mean + np.sqrt(prior.variances) * rng.standard_normal((m, prior.n))
    elif isinstance(prior, ScaledShape):
        out = np.outer(prior.amplitude.sample(rng, m), prior.shape)
    elif isinstance(prior, SamplerOnly):
        out = np.asarray(prior.sampler(rng, m), dtype=float).reshape(m, prior.n)
    else:
        raise TypeError(f"unsupported prior {type(prior).__name__}")
    return out[0].copy() if size is None else out


def atoms(prior: SignalPrior) -> list[tuple[np.ndarray, float]]:
    """Exact finite support as ``(atom, weight)`` pairs."""
    red = reduce(prior)
    if not isinstance(red, Atomic):
        raise EnumerationUnavailable(
            f"enumeration unavailable for {type(prior).__name__} priors"
        )
    return [(a.copy(), float(w)) for a, w in zip(red.atoms, red.weights)]


def prior_moments(prior: SignalPrior, mc: McConfig | None = None) -> PriorMoments:
    """Mean and energy ``E|x|_H^2``; exact except for :class:`SamplerOnly`."""
    if isinstance(prior, Atomic):
        mean = prior.weights @ prior.atoms
        energy = float(prior.weights @ np.sum(prior.atoms**2, axis=1))
    elif isinstance(prior, GaussianDiagonal):
        mean = prior.mean.copy()
        energy = float(np.sum(prior.variances) + prior.mean @ prior.mean)
    elif isinstance(prior, ScaledShape):
        m1, m2 = prior.amplitude.moments()
        mean = m1 * prior.shape
        energy = m2 * float(prior.shape @ prior.shape)
    elif isinstance(prior, SamplerOnly):
        mc = mc or McConfig()
        res = run_batches(
            mc,
            lambda rng, size: sample_signal(prior, rng, size),
            lambda x: {"x": x, "energy": np.sum(x**2, axis=1)},
        )
        return PriorMoments(
            res.mean("x"), float(res.mean("energy")), False,
            float(res.stderr("energy")),
        )
    else:
        raise TypeError(f"unsupported prior {type(prior).__name__}")
    return PriorMoments(np.asarray(mean, dtype=float), energy, True)
