"""Finite orthonormal-coordinate model of the Wiener space and the additive channel.

Everything is expressed in the step basis

    e_i'(t) = 1_{[(i-1)dt, i dt)}(t) / sqrt(dt),   dt = T / n,

so that a Cameron-Martin element ``h`` is a coefficient vector, the noise
``w`` is represented by its i.i.d. N(0, 1) coordinates ``z_i = <w, e_i>``,
and the observation ``y = rho x + w`` becomes ``v = rho a + z``.

HVectors and noise coordinates are plain 1-D float arrays; functions that
act coordinatewise also accept stacked ``(m, n)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Basis:
    """Step basis with ``n`` coordinates on ``[0, T]``."""

    n: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"basis needs n >= 1 coordinates, got {self.n!r}")
        if not self.T > 0:
            raise ValueError(f"time horizon T must be positive, got {self.T!r}")

    @property
    def step(self) -> float:
        return self.T / self.n

    @property
    def grid(self) -> np.ndarray:
        """Left endpoints ``t_{i-1}`` of the basis intervals."""
        return self.step * np.arange(self.n)

    def vector(self, i: int) -> np.ndarray:
        """Coefficients of the ``i``-th basis element (0-based)."""
        e = np.zeros(self.n)
        e[i] = 1.0
        return e

    def from_derivative(self, xprime) -> np.ndarray:
        """Coefficients ``a_i = x'(t_{i-1}) sqrt(dt)`` of a path given by its derivative.

        ``xprime`` is a callable of time or an array of ``n`` samples.
        """
        vals = xprime(self.grid) if callable(xprime) else np.asarray(xprime, float)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), (self.n,))
        return vals * math.sqrt(self.step)

    def constant_shape(self) -> np.ndarray:
        """Coefficients of ``x(t) = t`` (unit derivative); ``|.|_H^2 = T``."""
        return self.from_derivative(np.ones(self.n))


@dataclass(frozen=True)
class Observation:
    """Observation coordinates ``v = rho * a + z`` together with ``rho``."""

    v: np.ndarray
    rho: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.ndim != 1:
            raise ValueError("an Observation holds a single coordinate vector")
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho!r}")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.v.shape[0]


def _as_pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(
            f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]} coordinates"
        )
    return a, b


def h_inner(a, b) -> float:
    """Cameron-Martin inner product ``(a, b)_H = sum_i a_i b_i``."""
    a, b = _as_pair(a, b)
    return np.sum(a * b, axis=-1)


def h_norm2(a) -> float:
    a = np.asarray(a, dtype=float)
    return np.sum(a * a, axis=-1)


def pair(z, h) -> float:
    """Stochastic integral ``<w, h> = delta h = sum_i h_i z_i``.

    For deterministic ``h`` and standard normal ``z`` this is N(0, |h|_H^2).
    """
    z, h = _as_pair(z, h)
    return np.sum(z * h, axis=-1)


def sample_noise(basis: Basis, rng: np.random.Generator, size: int | None = None):
    """Draw the i.i.d. N(0, 1) noise coordinates; ``size`` stacks draws row-wise."""
    shape = (basis.n,) if size is None else (size, basis.n)
    return rng.standard_normal(shape)


def channel(a, z, rho: float):
    """Additive channel ``v = rho * a + z`` (coordinatewise, exact).

    Returns an :class:`Observation` for single vectors, a raw array for
    stacked inputs.
    """
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho!r}")
    a, z = _as_pair(a, z)
    v = rho * a + z
    if v.ndim == 1:
        return Observation(v, rho)
    return v


def truncate(h, theta: float):
    """Projection ``pi_theta``: zero every coordinate ``i > floor(theta * n)``.

    Works on HVectors, stacked arrays and Observations (same type out).
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta!r}")
    if isinstance(h, Observation):
        return Observation(truncate(h.v, theta), h.rho)
    h = np.asarray(h, dtype=float)
    n = h.shape[-1]
    k = int(math.floor(theta * n))
    out = h.copy()
    out[..., k:] = 0.0
    return out


def coarsen(h, factor: int) -> np.ndarray:
    """Project onto the step basis with ``factor`` times wider intervals.

    Coarse coordinate ``j`` is ``sum_{i in block j} h_i / sqrt(factor)``,
    i.e. the inner product with the coarse basis element. Applied to noise
    coordinates this yields exact N(0, 1) coarse noise built from the same
    Brownian path, which couples experiments across resolutions.
    """
    h = np.asarray(h, dtype=float)
    n = h.shape[-1]
    if factor < 1 or n % factor:
        raise ValueError(f"cannot coarsen {n} coordinates by a factor {factor}")
    blocks = h.reshape(h.shape[:-1] + (n // factor, factor))
    return blocks.sum(axis=-1) / math.sqrt(factor)
