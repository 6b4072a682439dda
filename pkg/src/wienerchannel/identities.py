"""Mutual information by several routes and checks of the channel identities.

Every check returns an :class:`IdentityReport` holding both sides, their
batch-means standard errors and the tolerance that decides ``passed``.
Tolerances combine three sources of error that are kept separate:

* Monte-Carlo noise: ``sigmas`` times the combined standard error;
* finite differences: an explicit truncation estimate (or ``fd``);
* time discretization of causal quantities: a leading-order estimate of
  the bias of the predictable (left-point) scan, scaled by ``disc_factor``.

Expectations under the observation law are always computed by sampling
``y = rho x + z`` jointly; the same draws are reused across rho values and
across resolutions (common random numbers) so that differences are sharp.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators import (
    DEFAULT_INNER,
    NestedMonteCarloWarning,
    UnsupportedPrior,
    causal_batch,
    is_causal_supported,
    moment_recursion_check,
    nested_stats,
    sample_joint,
)
from .likelihood import eval_exact, exact_stats, hessian_log, posterior
from .malliavin import (
    FD_STEP,
    FD_STEP_SECOND,
    divergence,
    gradient_fd,
    hess_trace_fd,
    likelihood_functional,
    log_likelihood_functional,
    number_operator,
    posterior_mean_field,
    tilde_divergence,
)
from .montecarlo import McConfig, McResult, batch_stderr, run_batches
from .priors import (
    Atomic,
    AtomicLaw,
    EnumerationUnavailable,
    GaussianDiagonal,
    GaussianLaw,
    SamplerOnly,
    ScaledShape,
    SignalPrior,
    is_enumerable,
    prior_moments,
    sample_signal,
)
from .wiener_space import Observation, coarsen


class GridTooCoarse(ValueError):
    """The rho grid is too coarse for the trapezoid rule."""


@dataclass(frozen=True)
class Tolerance:
    """Tolerance profile.

    Parameters
    ----------
    sigmas : float
        Multiplier of the combined standard error for statistical checks.
    analytic : float
        Absolute tolerance of closed-form identities.
    fd : float
        Relative tolerance of finite-difference comparisons.
    disc_factor : float
        Safety factor on the estimated discretization bias of causal checks.
    per_sample : float
        Absolute tolerance of per-sample identities that are pure algebra.
    """

    sigmas: float = 4.0
    analytic: float = 1e-8
    fd: float = 1e-4
    disc_factor: float = 2.0
    per_sample: float = 1e-10

    def __post_init__(self):
        for name in ("sigmas", "analytic", "fd", "disc_factor", "per_sample"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"tolerance {name} must be nonnegative")


@dataclass(frozen=True)
class IdentityReport:
    """Outcome of one identity or inequality check.

    ``kind`` is ``"equal"`` (``|lhs - rhs| <= tolerance``), ``"lhs>=rhs"``
    (``lhs - rhs >= -tolerance``) or ``"lhs<=rhs"``. An auxiliary per-sample
    residual, when present, must also stay below ``aux_tolerance``.
    ``status="near-singular"`` marks a suppressed check, which passes.
    """

    name: str
    lhs: float
    rhs: float
    stderr_lhs: float = 0.0
    stderr_rhs: float = 0.0
    tolerance: float = 0.0
    rule: str = "absolute"
    kind: str = "equal"
    status: str = "checked"
    aux_residual: float = 0.0
    aux_tolerance: float = math.inf
    metadata: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        if self.status == "near-singular":
            return True
        r = self.residual
        if not (np.isfinite(r) and self.aux_residual <= self.aux_tolerance):
            return False
        if self.kind == "equal":
            return abs(r) <= self.tolerance
        if self.kind == "lhs>=rhs":
            return r >= -self.tolerance
        if self.kind == "lhs<=rhs":
            return r <= self.tolerance
        raise ValueError(f"unknown report kind {self.kind!r}")

    def as_dict(self) -> dict:
        return {
            "identity": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "stderr_lhs": self.stderr_lhs,
            "stderr_rhs": self.stderr_rhs,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "rule": self.rule,
            "kind": self.kind,
            "status": self.status,
            "aux_residual": self.aux_residual,
            "aux_tolerance": self.aux_tolerance,
            "pass": self.passed,
            **self.metadata,
        }


def default_fd_step(rho: float) -> float:
    return max(1e-3, rho / 100.0)


# -- the joint sampling pass --------------------------------------------------


def _has_exact_posterior(prior: SignalPrior) -> bool:
    try:
        exact_stats(prior, 0.0, np.zeros((1, prior.n)))
    except EnumerationUnavailable:
        return False
    return True


def _posterior_fn(prior, exact: bool):
    if exact:
        return lambda rho, V, Xi: exact_stats(prior, rho, V)
    return lambda rho, V, Xi: nested_stats(prior, rho, V, inner_draws=Xi)


@dataclass
class _Pass:
    """Per-batch statistics of one joint sampling pass at a fixed rho."""

    res: McResult
    rho: float
    n: int
    mc: McConfig
    energy: float | None
    fd_step: float | None

    @property
    def meta(self) -> dict:
        return {"rho": self.rho, "n": self.n, "N": self.res.samples, "seed": self.mc.seed}

    def b(self, key):
        return self.res.batch[key]

    def energy_b(self):
        if self.energy is not None:
            return np.full(self.res.batches, self.energy)
        return self.b("energy")

    def i_moment(self):
        return 0.5 * self.rho**2 * self.energy_b() - self.b("log_ell")

    def i_paired(self):
        return self.b("log_ratio")


def _pass(
    prior: SignalPrior,
    rho: float,
    mc: McConfig,
    causal: bool = False,
    fd_step: float | None = None,
    draw=None,
    inner: int = DEFAULT_INNER,
    grid=(),
) -> _Pass:
    """One pass over joint draws collecting every per-sample statistic.

    ``draw(rng, size) -> (X, Z)`` overrides the joint sampler (used for
    coupling resolutions). ``grid`` lists extra rho values at which the
    non-causal error is recorded on the same draws.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    exact = _has_exact_posterior(prior)
    if not exact:
        warnings.warn(
            "nested-MC bias unquantified: posterior of a sampler-only prior "
            "estimated by self-normalized importance sampling",
            NestedMonteCarloWarning,
            stacklevel=3,
        )
    if causal and not is_causal_supported(prior):
        raise UnsupportedPrior(f"causal filtering unavailable for {type(prior).__name__}")
    post = _posterior_fn(prior, exact)
    base = draw or (lambda rng, size: sample_joint(prior, rng, size))
    offsets = []
    if fd_step is not None and rho - 2 * fd_step >= 0:
        offsets = [fd_step, -fd_step, 2 * fd_step, -2 * fd_step]
    grid = np.asarray(grid, dtype=float)

    def draw_all(rng, size):
        X, Z = base(rng, size)
        Xi = None if exact else sample_signal(prior, rng, inner)
        return X, Z, Xi

    def stats(d):
        X, Z, Xi = d
        V = rho * X + Z
        st = post(rho, V, Xi)
        x2 = np.sum(X**2, axis=1)
        xbar2 = np.sum(st.xbar**2, axis=1)
        grad = rho * st.xbar
        grad2 = np.sum(grad**2, axis=1)
        trace_c = rho**2 * st.var_trace
        trace_u = rho**2 * (st.second - xbar2)
        out = {
            "log_ell": st.log_ell,
            "energy": x2,
            "xbar2": xbar2,
            "grad2": grad2,
            "err_nc": np.sum((X - st.xbar) ** 2, axis=1),
            "trace": trace_c,
            "log_ratio": rho * np.sum(V * X, axis=1) - 0.5 * rho**2 * x2 - st.log_ell,
            "max_trace_gap": np.abs(trace_c - trace_u),
            "max_fisher_gap": np.abs(rho * xbar2 - grad2 / rho) if rho > 0 else np.zeros(len(X)),
        }
        if causal:
            pred, _, pvar = causal_batch(prior, rho, V)
            out["xhat2"] = np.sum(pred**2, axis=1)
            out["err_c"] = np.sum((X - pred) ** 2, axis=1)
            out["err_c_rb"] = pvar.sum(axis=1)
            # leading-order bias of the left-point scan: sum_i rho^4 Var_i^2 / 4
            out["disc_lead"] = 0.25 * rho**4 * np.sum(pvar**2, axis=1)
        for k, off in enumerate(offsets):
            r = rho + off
            out[f"log_ell_fd{k}"] = post(r, r * X + Z, Xi).log_ell
        if grid.size:
            errs = []
            for g in grid:
                sg = post(g, g * X + Z, Xi)
                errs.append(np.sum((X - sg.xbar) ** 2, axis=1))
            out["err_nc_grid"] = np.stack(errs, axis=1)
        return out

    res = run_batches(mc, draw_all, stats)
    pm = prior_moments(prior) if not isinstance(prior, SamplerOnly) else None
    return _Pass(res, float(rho), prior.n, mc, pm.energy if pm else None,
                 fd_step if offsets else None)


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(batch_stderr(values))


def _combined_se(lhs_b, rhs_b) -> float:
    """max(root-sum-square of the two stderrs, stderr of the paired difference)."""
    _, se_l = _mean_se(lhs_b)
    _, se_r = _mean_se(rhs_b)
    _, se_d = _mean_se(np.asarray(lhs_b) - np.asarray(rhs_b))
    return max(math.hypot(se_l, se_r), se_d)


def _stat_report(name, p: _Pass, lhs_b, rhs_b, tol: Tolerance, kind="equal",
                 extra=0.0, extra_rule="", **meta) -> IdentityReport:
    B = p.res.batches
    lhs_b = np.broadcast_to(np.asarray(lhs_b, dtype=float), (B,))
    rhs_b = np.broadcast_to(np.asarray(rhs_b, dtype=float), (B,))
    lhs, se_l = _mean_se(lhs_b)
    rhs, se_r = _mean_se(rhs_b)
    comb = _combined_se(lhs_b, rhs_b)
    floor = tol.analytic * max(1.0, abs(lhs), abs(rhs))
    tolerance = tol.sigmas * comb + extra + floor
    rule = f"{tol.sigmas:g}*combined_se" + (f"+{extra_rule}" if extra_rule else "") + "+analytic_floor"
    return IdentityReport(
        name, lhs, rhs, se_l, se_r, tolerance, rule, kind,
        metadata={**p.meta, **meta},
    )


# -- mutual information --------------------------------------------------------


def mutual_info_direct(prior: SignalPrior, rho: float, mc: McConfig, method: str = "moment",
                       draw=None) -> tuple[float, float]:
    """``I = (rho^2/2) E|x|^2 - E_1 log l`` with its batch-means stderr.

    ``method="paired"`` averages ``log(dmu_{Y|X}/dmu_W) - log l`` instead.
    """
    if method not in ("moment", "paired"):
        raise ValueError(f"unknown method {method!r}")
    if rho == 0:
        return 0.0, 0.0
    p = _pass(prior, rho, mc, draw=draw)
    return _mean_se(p.i_moment() if method == "moment" else p.i_paired())


def mutual_info_duncan(prior: SignalPrior, rho: float, mc: McConfig,
                       draw=None) -> tuple[float, float]:
    """``(rho^2/2) E|x - xhat|^2`` with the Rao-Blackwellized causal error."""
    if rho == 0:
        return 0.0, 0.0
    p = _pass(prior, rho, mc, causal=True, draw=draw)
    return _mean_se(0.5 * rho**2 * p.b("err_c_rb"))


def _integration_grid(rho_grid, max_spacing: float, refine: bool):
    """Grid from 0 through every requested rho; returns ``(grid, requested_idx, coarse_idx)``.

    With ``refine`` every segment between consecutive requested points is
    split into an even number of pieces no wider than ``max_spacing``, so
    that the every-other-point subgrid still contains all requested points.
    """
    req = np.asarray(rho_grid, dtype=float)
    if req.size == 0:
        raise ValueError("empty rho grid")
    if np.any(req < 0) or np.any(np.diff(req) <= 0):
        raise ValueError("rho grid must be nonnegative and strictly increasing")
    knots = req if req[0] == 0 else np.concatenate([[0.0], req])
    if not refine:
        if np.any(np.diff(knots) > max_spacing):
            raise GridTooCoarse(
                f"largest rho spacing {np.max(np.diff(knots)):.3g} exceeds {max_spacing:g}"
            )
        grid = knots
        coarse = None
    else:
        pieces = [knots[:1]]
        for a, b in zip(knots[:-1], knots[1:]):
            k = 2 * math.ceil((b - a) / (2 * max_spacing))
            pieces.append(np.linspace(a, b, k + 1)[1:])
        grid = np.concatenate(pieces)
        coarse = np.arange(0, grid.size, 2)
    idx = np.searchsorted(grid, req)
    return grid, idx, coarse


def _cumtrapz(x, f):
    """Cumulative trapezoid along the last axis, starting at 0."""
    inc = 0.5 * (f[..., 1:] + f[..., :-1]) * np.diff(x)
    return np.concatenate([np.zeros(f.shape[:-1] + (1,)), np.cumsum(inc, axis=-1)], axis=-1)


@dataclass(frozen=True)
class SnrCurve:
    """Mutual information and MMSE along a rho grid, each with a stderr.

    Quantities that were not requested are NaN.
    """

    rho: np.ndarray
    I_direct: np.ndarray
    I_direct_se: np.ndarray
    I_immse: np.ndarray
    I_immse_se: np.ndarray
    I_immse_quad_err: np.ndarray
    I_duncan: np.ndarray
    I_duncan_se: np.ndarray
    mmse_nc: np.ndarray
    mmse_nc_se: np.ndarray
    mmse_c: np.ndarray
    mmse_c_se: np.ndarray
    relent: np.ndarray
    relent_se: np.ndarray
    metadata: dict = field(default_factory=dict)

    COLUMNS = (
        "rho", "I_direct", "I_direct_se", "I_immse", "I_immse_se", "I_duncan", "I_duncan_se",
        "mmse_nc", "mmse_nc_se", "mmse_c", "mmse_c_se", "relent", "relent_se",
    )

    def rows(self) -> list[dict]:
        return [
            {c: float(getattr(self, c)[j]) for c in self.COLUMNS}
            | {"I_immse_quad_err": float(self.I_immse_quad_err[j])}
            for j in range(self.rho.size)
        ]


def snr_curve(prior: SignalPrior, rho_grid, mc: McConfig, max_spacing: float = 0.05,
              refine: bool = True, causal: bool | None = None, draw=None) -> SnrCurve:
    """All mutual-information routes along ``rho_grid`` from a single set of draws.

    ``I_immse(rho_j) = int_0^{rho_j} s mmse_nc(s) ds`` by the composite
    trapezoid on a refined grid. Its quadrature error is estimated from the
    every-other-point subgrid, ``|I_fine - I_coarse| / 3``.
    """
    grid, idx, coarse = _integration_grid(rho_grid, max_spacing, refine)
    if causal is None:
        causal = is_causal_supported(prior)
    req = grid[idx]
    fields = {k: np.full(req.size, np.nan) for k in SnrCurve.COLUMNS if k != "rho"}
    fields["I_immse_quad_err"] = np.full(req.size, np.nan)

    # one pass per requested rho; the mmse grid rides along on the first one
    passes = []
    for j, r in enumerate(req):
        passes.append(_pass(prior, r, mc, causal=causal, draw=draw,
                            grid=grid if j == 0 else ()))
    err_grid = passes[0].b("err_nc_grid")  # (B, len(grid))
    integral = _cumtrapz(grid, grid * err_grid)  # (B, len(grid))
    fields["I_immse"] = integral[:, idx].mean(axis=0)
    fields["I_immse_se"] = batch_stderr(integral[:, idx])
    if coarse is not None:
        ic = _cumtrapz(grid[coarse], grid[coarse] * err_grid[:, coarse]).mean(axis=0)
        fine_at = integral.mean(axis=0)[coarse]
        fields["I_immse_quad_err"] = (np.abs(fine_at - ic) / 3.0)[idx // 2]
    for j, p in enumerate(passes):
        fields["I_direct"][j], fields["I_direct_se"][j] = _mean_se(p.i_moment())
        fields["mmse_nc"][j], fields["mmse_nc_se"][j] = _mean_se(p.b("err_nc"))
        fields["relent"][j], fields["relent_se"][j] = _mean_se(p.b("log_ell"))
        if causal:
            fields["mmse_c"][j], fields["mmse_c_se"][j] = _mean_se(p.b("err_c_rb"))
            fields["I_duncan"][j], fields["I_duncan_se"][j] = _mean_se(
                0.5 * p.rho**2 * p.b("err_c_rb"))
    return SnrCurve(req, **fields, metadata={"n": prior.n, "N": mc.effective_samples,
                                             "seed": mc.seed, "grid_points": int(grid.size)})


def mutual_info_immse(prior: SignalPrior, rho_grid, mc: McConfig, max_spacing: float = 0.05,
                      refine: bool = True, draw=None) -> SnrCurve:
    """I-MMSE integral along the grid (with the direct estimate alongside)."""
    return snr_curve(prior, rho_grid, mc, max_spacing, refine, causal=False, draw=draw)


# -- statistical identity reports -----------------------------------------------


def _disc_tolerance(p: _Pass, tol: Tolerance) -> float:
    return tol.disc_factor * float(p.b("disc_lead").mean())


def discretization_tolerance(energy: float, rho: float, n: int, factor: float = 2.0) -> float:
    """Reference bias of the left-point causal scan for the random-constant Gaussian signal.

    ``(rho^2/2) (sum_i (E/n) / (1 + rho^2 E i/n) - log(1 + rho^2 E)/rho^2)``
    times ``factor``; it decays like ``1/n``.
    """
    if rho == 0:
        return 0.0
    d = energy / n
    disc = float(np.sum(d / (1.0 + rho**2 * d * np.arange(n))))
    cont = math.log1p(rho**2 * energy) / rho**2
    return factor * 0.5 * rho**2 * (disc - cont)


def _direct_routes(p, tol):
    return _stat_report("mutual_info_routes", p, p.i_moment(), p.i_paired(), tol)


def _nonnegativity(p, tol):
    return [
        _stat_report("mutual_info_nonnegative", p, p.i_moment(), 0.0, tol, kind="lhs>=rhs"),
        _stat_report("relative_entropy_nonnegative", p, p.b("log_ell"), 0.0, tol, kind="lhs>=rhs"),
    ]


def _relent_moment(p, tol):
    rhs = 0.5 * p.rho**2 * p.energy_b() - p.i_paired()
    return _stat_report("relative_entropy_energy", p, p.b("log_ell"), rhs, tol)


def _relent_causal(p, tol):
    d = _disc_tolerance(p, tol)
    return _stat_report("relative_entropy_causal", p, p.b("log_ell"),
                        0.5 * p.rho**2 * p.b("xhat2"), tol, extra=d, extra_rule="disc",
                        disc=d)


def _duncan(p, tol):
    d = _disc_tolerance(p, tol)
    return _stat_report("duncan", p, 0.5 * p.rho**2 * p.b("err_c_rb"), p.i_moment(), tol,
                        extra=d, extra_rule="disc", disc=d)


def _causal_inequality(p, tol):
    return _stat_report("causal_energy_inequality", p, p.b("xbar2"), p.b("xhat2"), tol,
                        kind="lhs>=rhs")


def _lsi(p, tol):
    gap = 0.5 * p.b("grad2") - p.b("log_ell")
    return _stat_report("lsi_gap", p, gap, 0.0, tol, kind="lhs>=rhs")


def _trace(p, tol):
    rhs = p.rho**2 * (p.energy_b() - p.b("xbar2"))
    third = p.rho**2 * p.energy_b() - p.b("grad2")
    rep = _stat_report("trace_identity", p, p.b("trace"), rhs, tol,
                       third=float(third.mean()), third_se=float(batch_stderr(third)))
    # the third form must also agree with the first
    third_ok = abs(rep.lhs - float(third.mean())) <= tol.sigmas * _combined_se(
        np.broadcast_to(p.b("trace"), third.shape), third) + tol.analytic
    aux = max(float(p.res.maximum("max_trace_gap")), 0.0 if third_ok else math.inf)
    return replace(rep, aux_residual=aux, aux_tolerance=tol.per_sample)


def _fd_derivatives(p: _Pass):
    """Per-batch central differences of ``rho -> E_1 log l`` at steps h and 2h."""
    h = p.fd_step
    d1 = (p.b("log_ell_fd0") - p.b("log_ell_fd1")) / (2 * h)
    d2 = (p.b("log_ell_fd2") - p.b("log_ell_fd3")) / (4 * h)
    return d1, d2


def _near_singular(name, p, tol, fd_step):
    return IdentityReport(
        name, math.nan, math.nan, tolerance=0.0, rule="suppressed: rho < 10*fd_step",
        status="near-singular", metadata={**p.meta, "fd_step": fd_step},
    )


def _debruijn(p, tol, fd_step):
    if p.fd_step is None or p.rho < 10 * fd_step:
        return _near_singular("debruijn", p, tol, fd_step)
    d1, d2 = _fd_derivatives(p)
    fd_err = abs(float(d2.mean() - d1.mean())) / 3.0
    B = p.rho * p.b("xbar2")
    C = p.b("grad2") / p.rho
    fd_term = max(fd_err, tol.fd * max(1.0, abs(float(B.mean()))))
    rep = _stat_report("debruijn", p, d1, B, tol, extra=fd_term, extra_rule="fd",
                       fd_step=p.fd_step, third=float(C.mean()),
                       third_se=float(batch_stderr(C)))
    ac = abs(rep.lhs - float(C.mean())) <= tol.sigmas * _combined_se(d1, C) + fd_term
    aux = max(float(p.res.maximum("max_fisher_gap")), 0.0 if ac else math.inf)
    return replace(rep, aux_residual=aux, aux_tolerance=tol.per_sample)


def _gsv(p, tol, fd_step):
    if p.fd_step is None or p.rho < 10 * fd_step:
        return _near_singular("gsv", p, tol, fd_step)
    d1, d2 = _fd_derivatives(p)
    fd_err = abs(float(d2.mean() - d1.mean())) / 3.0
    dI = p.rho * p.energy_b() - d1
    rhs = p.rho * p.b("err_nc")
    fd_term = max(fd_err, tol.fd * max(1.0, abs(float(rhs.mean()))))
    return _stat_report("gsv", p, dI, rhs, tol, extra=fd_term, extra_rule="fd",
                        fd_step=p.fd_step)


def relative_entropy_checks(prior: SignalPrior, rho: float, mc: McConfig,
                            tol: Tolerance = Tolerance(), draw=None) -> list[IdentityReport]:
    """``E_1 log l`` against ``(rho^2/2) E|xhat|^2`` and against ``(rho^2/2) E|x|^2 - I``."""
    causal = is_causal_supported(prior)
    p = _pass(prior, rho, mc, causal=causal, draw=draw)
    out = [_relent_moment(p, tol)]
    if causal:
        out.insert(0, _relent_causal(p, tol))
    return out


def debruijn_check(prior: SignalPrior, rho: float, mc: McConfig, fd_step: float | None = None,
                   tol: Tolerance = Tolerance()) -> IdentityReport:
    """Finite difference of ``rho -> E_1 log l`` against ``rho E|xbar|^2`` and ``E|grad log l|^2 / rho``.

    Suppressed (status ``"near-singular"``) when ``rho < 10 fd_step``.
    """
    fd_step = default_fd_step(rho) if fd_step is None else fd_step
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    p = _pass(prior, rho, mc, fd_step=fd_step if rho >= 10 * fd_step else None)
    return _debruijn(p, tol, fd_step)


def gsv_check(prior: SignalPrior, rho: float, mc: McConfig, fd_step: float | None = None,
              tol: Tolerance = Tolerance()) -> IdentityReport:
    """``dI/drho`` by central differences (common random numbers) against ``rho mmse``."""
    fd_step = default_fd_step(rho) if fd_step is None else fd_step
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    p = _pass(prior, rho, mc, fd_step=fd_step if rho >= 10 * fd_step else None)
    return _gsv(p, tol, fd_step)


def trace_identity_check(prior: SignalPrior, rho: float, mc: McConfig,
                         tol: Tolerance = Tolerance()) -> IdentityReport:
    """``E_1 trace hess log l`` against ``rho^2 (E|x|^2 - E|xbar|^2)`` and ``rho^2 E|x|^2 - E|grad log l|^2``."""
    if not _has_exact_posterior(prior):
        raise UnsupportedPrior("the trace identity needs a closed-form posterior")
    return _trace(_pass(prior, rho, mc), tol)


def lsi_gap(prior: SignalPrior, rho: float, mc: McConfig,
            tol: Tolerance = Tolerance()) -> IdentityReport:
    """``E_1 |grad log l|^2 / 2 - E_1 log l >= 0``; the report's ``lhs`` is the gap."""
    return _lsi(_pass(prior, rho, mc), tol)


def causal_inequality_check(prior: SignalPrior, rho: float, mc: McConfig,
                            tol: Tolerance = Tolerance()) -> IdentityReport:
    """``E|xhat|^2 <= E|xbar|^2``."""
    return _causal_inequality(_pass(prior, rho, mc, causal=True), tol)


def duncan_check(prior: SignalPrior, rho: float, mc: McConfig, tol: Tolerance = Tolerance(),
                 draw=None) -> IdentityReport:
    """``(rho^2/2)`` causal MMSE against the direct mutual information."""
    return _duncan(_pass(prior, rho, mc, causal=True, draw=draw), tol)


def immse_reports(curve: SnrCurve, tol: Tolerance = Tolerance()) -> list[IdentityReport]:
    """``I_immse`` against ``I_direct`` at each grid point (stderrs combined in quadrature)."""
    out = []
    for j, r in enumerate(curve.rho):
        se = math.hypot(curve.I_immse_se[j], curve.I_direct_se[j])
        q = curve.I_immse_quad_err[j]
        q = 0.0 if np.isnan(q) else float(q)
        lhs, rhs = float(curve.I_immse[j]), float(curve.I_direct[j])
        out.append(IdentityReport(
            "immse", lhs, rhs, float(curve.I_immse_se[j]), float(curve.I_direct_se[j]),
            tol.sigmas * se + q + tol.analytic * max(1.0, abs(lhs), abs(rhs)),
            f"{tol.sigmas:g}*combined_se+quadrature+analytic_floor",
            metadata={"rho": float(r), **curve.metadata, "quad_err": q},
        ))
    return out


def monotonicity_reports(curve: SnrCurve, tol: Tolerance = Tolerance()) -> list[IdentityReport]:
    """``I_direct`` nondecreasing in rho within error bars."""
    out = []
    for j in range(1, curve.rho.size):
        se = math.hypot(curve.I_direct_se[j], curve.I_direct_se[j - 1])
        lhs, rhs = float(curve.I_direct[j]), float(curve.I_direct[j - 1])
        out.append(IdentityReport(
            "mutual_info_monotone", lhs, rhs, float(curve.I_direct_se[j]),
            float(curve.I_direct_se[j - 1]), tol.sigmas * se, f"{tol.sigmas:g}*combined_se",
            kind="lhs>=rhs", metadata={"rho": float(curve.rho[j]), **curve.metadata},
        ))
    return out


# -- per-sample analytic checks ------------------------------------------------


def _observations(prior: SignalPrior, rho: float, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    X, Z = sample_joint(prior, rng, samples)
    return [Observation(v, rho) for v in rho * X + Z], rng


def _analytic_meta(prior, rho, samples, seed):
    return {"rho": float(rho), "n": prior.n, "N": samples, "seed": seed}


def _require_atomic(prior, what):
    if not is_enumerable(prior):
        raise UnsupportedPrior(f"{what} needs an atomic prior")


def gradient_identity_check(prior: SignalPrior, rho: float, samples: int = 100, seed: int = 0,
                            fd_step: float = FD_STEP, tol: Tolerance = Tolerance(),
                            fd_rel: float = 1e-5) -> IdentityReport:
    """``grad log l = rho xbar`` per sample.

    ``lhs`` is the largest relative finite-difference error of the analytic
    gradient (tolerance ``fd_rel``); the auxiliary residual is
    ``max |grad log l - rho xbar|_inf`` with ``xbar`` from the posterior state.
    """
    _require_atomic(prior, "the gradient identity")
    obs, _ = _observations(prior, rho, samples, seed)
    F = log_likelihood_functional(prior, rho)
    fd_err = aux = 0.0
    for o in obs:
        g = eval_exact(prior, o).grad_log
        aux = max(aux, float(np.max(np.abs(g - rho * posterior(prior, o).mean()))))
        fd = gradient_fd(F, o.v, fd_step)
        fd_err = max(fd_err, float(np.max(np.abs(fd - g))) / max(1.0, float(np.max(np.abs(g)))))
    return IdentityReport(
        "gradient_identity", fd_err, 0.0, tolerance=fd_rel, rule="fd_relative",
        kind="lhs<=rhs", aux_residual=aux, aux_tolerance=tol.per_sample,
        metadata=_analytic_meta(prior, rho, samples, seed) | {"fd_step": fd_step},
    )


def hessian_identity_check(prior: SignalPrior, rho: float, samples: int = 100, seed: int = 0,
                           tol: Tolerance = Tolerance()) -> IdentityReport:
    """Second derivatives of ``log l`` as posterior variances.

    Auxiliary residual: ``max |(h, hess log l h) - rho^2 Var[(h, x) | Y]|``
    over random directions ``h`` (closed form on both sides). ``lhs``: the
    largest relative error of a second-difference Hessian trace.
    """
    _require_atomic(prior, "the Hessian identity")
    obs, rng = _observations(prior, rho, samples, seed)
    F = log_likelihood_functional(prior, rho)
    fd_err = aux = 0.0
    for o in obs:
        h = rng.standard_normal(prior.n)
        H = hessian_log(prior, o)
        state = posterior(prior, o)
        var_h = state.moment([h, h]) - float(state.mean() @ h) ** 2
        aux = max(aux, abs(float(h @ H @ h) - rho**2 * var_h))
        t = eval_exact(prior, o).trace_hess_log
        aux = max(aux, abs(t - float(np.trace(H))))
        fd = hess_trace_fd(F, o.v, FD_STEP_SECOND)
        fd_err = max(fd_err, abs(fd - t) / max(1.0, abs(t)))
    return IdentityReport(
        "hessian_identity", fd_err, 0.0, tolerance=tol.fd, rule="fd_relative",
        kind="lhs<=rhs", aux_residual=aux, aux_tolerance=tol.per_sample,
        metadata=_analytic_meta(prior, rho, samples, seed),
    )


def moment_recursion_report(prior: SignalPrior, rho: float, samples: int = 100, seed: int = 0,
                            max_length: int = 3, tol: Tolerance = Tolerance()) -> IdentityReport:
    """Largest residual of the conditional-moment recursion over random directions."""
    _require_atomic(prior, "the moment recursion")
    obs, rng = _observations(prior, rho, samples, seed)
    worst = 0.0
    for o in obs:
        for length in range(2, max_length + 1):
            hs = list(rng.standard_normal((length, prior.n)))
            worst = max(worst, moment_recursion_check(prior, o, hs))
    return IdentityReport(
        "moment_recursion", worst, 0.0, tolerance=tol.analytic, rule="absolute",
        kind="lhs<=rhs", metadata=_analytic_meta(prior, rho, samples, seed) | {"max_length": max_length},
    )


def number_identity_check(prior: SignalPrior, rho: float, samples: int = 100, seed: int = 0,
                          tol: Tolerance = Tolerance()) -> IdentityReport:
    """``L log l = rho delta xbar`` and ``delta~ xbar = L l / (rho l)`` per sample.

    ``lhs`` is the largest absolute residual of either identity.
    """
    _require_atomic(prior, "the number-operator identities")
    obs, _ = _observations(prior, rho, samples, seed)
    logl = log_likelihood_functional(prior, rho)
    ell = likelihood_functional(prior, rho)
    u = posterior_mean_field(prior, rho)
    lik = lambda v: eval_exact(prior, Observation(v, rho))  # noqa: E731
    worst = 0.0
    for o in obs:
        d = divergence(u, o.v)
        worst = max(worst, abs(number_operator(logl, o.v) - rho * d))
        if rho > 0:
            lhs = tilde_divergence(u, lik, o.v)
            rhs = number_operator(ell, o.v) / (rho * ell(o.v))
            worst = max(worst, abs(lhs - rhs))
    return IdentityReport(
        "number_operator", worst, 0.0, tolerance=tol.analytic, rule="absolute",
        kind="lhs<=rhs", metadata=_analytic_meta(prior, rho, samples, seed),
    )


# -- classical one-dimensional de Bruijn ------------------------------------------


def _mixture(law):
    """Components ``(centers, weights, base variances)`` of the law of ``x``."""
    if isinstance(law, AtomicLaw):
        return law.values, law.weights, np.zeros(law.values.size)
    if isinstance(law, GaussianLaw):
        return np.array([law.mean]), np.array([1.0]), np.array([law.var])
    raise TypeError(f"unsupported amplitude law {type(law).__name__}")


def _entropy_and_fisher(law, t, nodes, weights):
    """``-E log p(y)`` and ``E (d/dy log p(y))^2`` for ``y = x + sqrt(t) w``."""
    c, p, s0 = _mixture(law)
    s = s0 + t
    y = c[:, None] + np.sqrt(s)[:, None] * nodes[None, :]  # (K, J): draws of y per component
    logc = (np.log(p) - 0.5 * np.log(2 * np.pi * s))[None, None, :] \
        - (y[..., None] - c) ** 2 / (2 * s)
    m = logc.max(axis=2, keepdims=True)
    lp = (m + np.log(np.sum(np.exp(logc - m), axis=2, keepdims=True)))
    r = np.exp(logc - lp)
    score = np.sum(r * (c - y[..., None]) / s, axis=2)
    E = lambda f: float(p @ (f @ weights))  # noqa: E731
    return -E(lp[..., 0]), E(score**2)


def _hermite_rule(order):
    x, w = np.polynomial.hermite_e.hermegauss(order)
    return x, w / math.sqrt(2 * math.pi)


def classical_debruijn_1d(law, t: float, order: int = 64, fd_step: float | None = None,
                          tol: Tolerance = Tolerance(), max_order: int = 256) -> IdentityReport:
    """``d/dt h(x + sqrt(t) w) = J(x + sqrt(t) w) / 2`` for a scalar ``x``.

    ``h`` is the differential entropy ``-E log p``; the derivative is a
    five-point difference of a Gauss-Hermite integral and the Fisher
    information ``J = E (log p)'^2`` is integrated with the same rule.
    The order is doubled (up to ``max_order``) until both sides move by
    less than ``tol.analytic``; the last change is added to the tolerance.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    d = fd_step or min(1e-3, t / 100)

    def sides(o):
        x, w = _hermite_rule(o)
        H = lambda tt: _entropy_and_fisher(law, tt, x, w)[0]  # noqa: E731
        lhs = (-H(t + 2 * d) + 8 * H(t + d) - 8 * H(t - d) + H(t - 2 * d)) / (12 * d)
        return lhs, 0.5 * _entropy_and_fisher(law, t, x, w)[1]

    lhs, rhs = sides(order)
    change = math.inf
    while 2 * order <= max_order:
        lhs2, rhs2 = sides(2 * order)
        change = max(abs(lhs2 - lhs), abs(rhs2 - rhs))
        order, lhs, rhs = 2 * order, lhs2, rhs2
        if change <= tol.analytic:
            break
    quad = 0.0 if change <= tol.analytic else change
    return IdentityReport(
        "classical_debruijn", lhs, rhs, tolerance=tol.fd * max(1.0, abs(rhs)) + quad,
        rule="fd_relative+quadrature",
        metadata={"t": t, "order": order, "fd_step": d, "quad_change": change},
    )


# -- batteries ----------------------------------------------------------------------


def verify_battery(prior: SignalPrior, rho: float, mc: McConfig, tol: Tolerance = Tolerance(),
                   fd_step: float | None = None, samples: int = 100) -> list[IdentityReport]:
    """Every applicable check at one rho, statistical ones from a single pass."""
    fd_step = default_fd_step(rho) if fd_step is None else fd_step
    out = []
    if is_enumerable(prior):
        out += [
            gradient_identity_check(prior, rho, samples, mc.seed, tol=tol),
            hessian_identity_check(prior, rho, samples, mc.seed, tol=tol),
            moment_recursion_report(prior, rho, samples, mc.seed, tol=tol),
            number_identity_check(prior, rho, samples, mc.seed, tol=tol),
        ]
    causal = is_causal_supported(prior)
    p = _pass(prior, rho, mc, causal=causal,
              fd_step=fd_step if rho >= 10 * fd_step else None)
    out.append(_direct_routes(p, tol))
    out += _nonnegativity(p, tol)
    out.append(_relent_moment(p, tol))
    if _has_exact_posterior(prior):
        out.append(_trace(p, tol))
    out.append(_debruijn(p, tol, fd_step))
    out.append(_gsv(p, tol, fd_step))
    out.append(_lsi(p, tol))
    if causal:
        out += [_duncan(p, tol), _relent_causal(p, tol), _causal_inequality(p, tol)]
    return out


# -- convergence in the resolution n ----------------------------------------------------


def project_prior(prior: SignalPrior, factor: int) -> SignalPrior:
    """Law of the signal projected on the step basis ``factor`` times coarser."""
    if factor == 1:
        return prior
    if isinstance(prior, Atomic):
        return Atomic(coarsen(prior.atoms, factor), prior.weights)
    if isinstance(prior, ScaledShape):
        return ScaledShape(coarsen(prior.shape, factor), prior.amplitude)
    if isinstance(prior, GaussianDiagonal):
        n = prior.n // factor
        var = prior.variances.reshape(n, factor).sum(axis=1) / factor
        return GaussianDiagonal(coarsen(prior.mean, factor), var)
    if isinstance(prior, SamplerOnly):
        return SamplerOnly(lambda rng, size: coarsen(prior.sampler(rng, size), factor),
                           prior.n // factor, prior.name)
    raise TypeError(f"unsupported prior {type(prior).__name__}")


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    I_direct: float
    I_direct_se: float
    I_duncan: float
    I_duncan_se: float
    duncan_residual: float
    duncan_residual_se: float
    relent: float
    relent_causal: float
    causal_residual: float
    causal_residual_se: float
    disc_tolerance: float


@dataclass(frozen=True)
class ConvergenceStudy:
    rho: float
    rows: tuple
    order: float | None
    decreasing: bool


def _empirical_order(n_list, estimates, residuals):
    """Decay exponent ``p`` of ``|residual| ~ C n^-p``.

    With three or more resolutions it is fitted to the successive
    differences of the estimates, which cancel the common Monte-Carlo error
    of the reference; with two, to the residuals themselves.
    """
    n = np.asarray(n_list, dtype=float)
    if n.size < 2:
        return None
    if n.size >= 3:
        diffs = np.abs(np.diff(np.asarray(estimates, dtype=float)))
        x = np.log(n[:-1])
        y = diffs
    else:
        x = np.log(n)
        y = np.abs(np.asarray(residuals, dtype=float))
    if np.any(y <= 0):
        return None
    return float(-np.polyfit(x, np.log(y), 1)[0])


def convergence_study(prior: SignalPrior, rho: float, mc: McConfig, n_list,
                      tol: Tolerance = Tolerance()) -> ConvergenceStudy:
    """Causal identities at several resolutions, all driven by the finest Brownian path.

    ``prior`` lives at the finest resolution ``max(n_list)``; coarser
    experiments use the projected prior and the block-summed draws, so the
    residuals at different ``n`` differ by discretization, not noise.
    ``order`` is the fitted decay exponent of the residual in ``n`` (see
    :func:`_empirical_order`; None with a single resolution).
    """
    n_list = [int(n) for n in n_list]
    if not n_list or any(b <= a for a, b in zip(n_list[:-1], n_list[1:])):
        raise ValueError("n_list must be a nonempty increasing list")
    fine = n_list[-1]
    if prior.n != fine:
        raise ValueError(f"prior has {prior.n} coordinates, finest resolution is {fine}")
    rows = []
    for n in n_list:
        if fine % n:
            raise ValueError(f"{n} does not divide the finest resolution {fine}")
        f = fine // n

        def draw(rng, size, f=f):
            X, Z = sample_joint(prior, rng, size)
            return coarsen(X, f), coarsen(Z, f)

        p = _pass(project_prior(prior, f), rho, mc, causal=True, draw=draw)
        duncan_b = 0.5 * rho**2 * p.b("err_c_rb")
        rc_b = 0.5 * rho**2 * p.b("xhat2")
        rows.append(ConvergenceRow(
            n,
            *_mean_se(p.i_moment()),
            *_mean_se(duncan_b),
            *_mean_se(duncan_b - p.i_moment()),
            float(p.b("log_ell").mean()),
            float(rc_b.mean()),
            *_mean_se(p.b("log_ell") - rc_b),
            _disc_tolerance(p, tol),
        ))
    order = _empirical_order(n_list, [r.I_duncan for r in rows], [r.duncan_residual for r in rows])
    signed = np.array([r.duncan_residual for r in rows])
    decreasing = bool(np.all(np.diff(signed) < 0)) if len(rows) >= 2 else True
    return ConvergenceStudy(float(rho), tuple(rows), order, decreasing)


__all__ = [
    "ConvergenceRow",
    "ConvergenceStudy",
    "GridTooCoarse",
    "IdentityReport",
    "SnrCurve",
    "Tolerance",
    "causal_inequality_check",
    "classical_debruijn_1d",
    "convergence_study",
    "debruijn_check",
    "default_fd_step",
    "discretization_tolerance",
    "duncan_check",
    "gradient_identity_check",
    "gsv_check",
    "hessian_identity_check",
    "immse_reports",
    "lsi_gap",
    "moment_recursion_report",
    "monotonicity_reports",
    "mutual_info_direct",
    "mutual_info_duncan",
    "mutual_info_immse",
    "number_identity_check",
    "project_prior",
    "relative_entropy_checks",
    "snr_curve",
    "trace_identity_check",
    "verify_battery",
]
