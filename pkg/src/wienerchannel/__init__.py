"""Likelihood ratios, estimators and information identities for ``y = rho x + w``.

The Wiener space is discretized on ``n`` step-basis coordinates of
``[0, T]``; signals are vectors of Cameron-Martin coefficients and the
noise is i.i.d. standard normal. See :mod:`wienerchannel.identities` for
the checks and :mod:`wienerchannel.cli` for the experiment runner.
"""

from .estimators import (
    causal_filter,
    causal_mmse,
    noncausal_estimate,
    noncausal_mmse,
)
from .identities import (
    IdentityReport,
    SnrCurve,
    Tolerance,
    classical_debruijn_1d,
    debruijn_check,
    lsi_gap,
    mutual_info_direct,
    mutual_info_duncan,
    mutual_info_immse,
    number_identity_check,
    relative_entropy_checks,
    trace_identity_check,
    verify_battery,
)
from .likelihood import LikelihoodEval, eval_exact, eval_mc
from .montecarlo import McConfig
from .oracle import gaussian_closed_form, quadrature_scalar, tensor_quadrature
from .priors import (
    Atomic,
    AtomicLaw,
    GaussianDiagonal,
    GaussianLaw,
    SamplerOnly,
    ScaledShape,
)
from .wiener_space import Basis, Observation, channel

__version__ = "0.1.0"

__all__ = [
    "Atomic",
    "AtomicLaw",
    "Basis",
    "GaussianDiagonal",
    "GaussianLaw",
    "IdentityReport",
    "LikelihoodEval",
    "McConfig",
    "Observation",
    "SamplerOnly",
    "ScaledShape",
    "SnrCurve",
    "Tolerance",
    "causal_filter",
    "causal_mmse",
    "channel",
    "classical_debruijn_1d",
    "debruijn_check",
    "eval_exact",
    "eval_mc",
    "gaussian_closed_form",
    "lsi_gap",
    "mutual_info_direct",
    "mutual_info_duncan",
    "mutual_info_immse",
    "noncausal_estimate",
    "noncausal_mmse",
    "number_identity_check",
    "quadrature_scalar",
    "relative_entropy_checks",
    "tensor_quadrature",
    "trace_identity_check",
    "verify_battery",
]
