import math

import numpy as np
import pytest

from conftest import gaussian_constant, pm1_constant, random_atomic
from wienerchannel.estimators import NestedMonteCarloWarning, UnsupportedPrior
from wienerchannel.identities import (
    GridTooCoarse,
    IdentityReport,
    Tolerance,
    causal_inequality_check,
    classical_debruijn_1d,
    convergence_study,
    debruijn_check,
    default_fd_step,
    discretization_tolerance,
    duncan_check,
    gradient_identity_check,
    gsv_check,
    hessian_identity_check,
    immse_reports,
    lsi_gap,
    moment_recursion_report,
    monotonicity_reports,
    mutual_info_direct,
    mutual_info_duncan,
    mutual_info_immse,
    number_identity_check,
    project_prior,
    relative_entropy_checks,
    snr_curve,
    trace_identity_check,
    verify_battery,
)
from wienerchannel.montecarlo import McConfig
from wienerchannel.oracle import gaussian_closed_form, quadrature_scalar
from wienerchannel.priors import (
    Atomic,
    AtomicLaw,
    GaussianDiagonal,
    GaussianLaw,
    SamplerOnly,
)

PM1 = Atomic([[-1.0], [1.0]], [0.5, 0.5])
G1 = GaussianDiagonal([0.0], [1.0])
MC = McConfig(50_000, 50, seed=21)


def _within(value, ref, se, k=4.0, extra=0.0):
    return abs(value - ref) <= k * se + extra


# -- reports and tolerances ------------------------------------------------------


def test_tolerance_rejects_negative():
    with pytest.raises(ValueError):
        Tolerance(sigmas=-1)


@pytest.mark.parametrize("kind, lhs, rhs, tol, expected", [
    ("equal", 1.0, 1.05, 0.1, True),
    ("equal", 1.0, 1.2, 0.1, False),
    ("lhs>=rhs", 0.95, 1.0, 0.1, True),
    ("lhs>=rhs", 0.8, 1.0, 0.1, False),
    ("lhs<=rhs", 1.05, 1.0, 0.1, True),
    ("lhs<=rhs", 1.2, 1.0, 0.1, False),
])
def test_report_kinds(kind, lhs, rhs, tol, expected):
    assert IdentityReport("x", lhs, rhs, tolerance=tol, kind=kind).passed is expected


def test_report_nan_and_aux_fail():
    assert not IdentityReport("x", math.nan, 0.0, tolerance=1.0).passed
    assert not IdentityReport("x", 0.0, 0.0, aux_residual=1.0, aux_tolerance=0.5).passed
    assert IdentityReport("x", math.nan, math.nan, status="near-singular").passed
    d = IdentityReport("x", 1.0, 0.5, tolerance=1.0, metadata={"rho": 2.0}).as_dict()
    assert d["residual"] == 0.5 and d["pass"] and d["rho"] == 2.0


def test_default_fd_step():
    assert default_fd_step(0.01) == 1e-3
    assert default_fd_step(2.0) == 0.02


# -- mutual information ------------------------------------------------------------


def test_mutual_info_rho_zero():
    assert mutual_info_direct(PM1, 0.0, MC) == (0.0, 0.0)
    assert mutual_info_duncan(PM1, 0.0, MC) == (0.0, 0.0)


def test_mutual_info_gaussian_constant():
    I, se = mutual_info_direct(gaussian_constant(16), 1.0, MC)
    assert _within(I, 0.5 * math.log(2), se)


@pytest.mark.parametrize("method", ["moment", "paired"])
def test_mutual_info_pm1_matches_quadrature(method):
    I, se = mutual_info_direct(PM1, 1.0, MC, method=method)
    ref = quadrature_scalar(AtomicLaw.symmetric_sign(), 1.0)
    assert _within(I, ref.I, se, extra=ref.doubling_delta)


def test_mutual_info_method_validated():
    with pytest.raises(ValueError):
        mutual_info_direct(PM1, 1.0, MC, method="nope")


def test_sampler_only_flags_nested_bias():
    prior = SamplerOnly(lambda rng, size: rng.choice([-1.0, 1.0], size=(size, 1)), 1)
    with pytest.warns(NestedMonteCarloWarning, match="nested-MC bias unquantified"):
        mutual_info_direct(prior, 1.0, McConfig(2000, 10, 0))


def test_immse_grid_zero():
    curve = mutual_info_immse(PM1, [0.0], MC)
    assert curve.I_immse[0] == 0.0 and curve.I_direct[0] == 0.0


def test_immse_gaussian_scalar():
    curve = mutual_info_immse(G1, [0.5, 1.0, 2.0], McConfig(20_000, 20, 3))
    ref = 0.5 * np.log1p(curve.rho**2)
    for j in range(3):
        se = math.hypot(curve.I_immse_se[j], 0.0)
        assert _within(curve.I_immse[j], ref[j], se, extra=curve.I_immse_quad_err[j] + 1e-6)
    assert all(r.passed for r in immse_reports(curve))


def test_immse_pm1_agrees_with_direct():
    curve = mutual_info_immse(PM1, [0.5, 1.0, 2.0], McConfig(20_000, 20, 4))
    reps = immse_reports(curve)
    assert len(reps) == 3 and all(r.passed for r in reps)
    assert all(r.passed for r in monotonicity_reports(curve))
    assert np.all(np.isnan(curve.I_duncan))


def test_grid_validation():
    with pytest.raises(ValueError):
        snr_curve(PM1, [], MC)
    with pytest.raises(ValueError):
        snr_curve(PM1, [1.0, 0.5], MC)
    with pytest.raises(GridTooCoarse):
        snr_curve(PM1, [0.5, 1.0], MC, max_spacing=0.1, refine=False)


def test_snr_curve_all_routes_on_causal_prior():
    curve = snr_curve(pm1_constant(32), [0.5, 1.0], McConfig(20_000, 20, 5))
    assert not np.any(np.isnan(curve.I_duncan))
    rows = curve.rows()
    assert rows[1]["rho"] == 1.0 and "I_immse_quad_err" in rows[1]


# -- statistical reports -------------------------------------------------------------


def test_relative_entropy_rho_zero():
    for r in relative_entropy_checks(pm1_constant(8), 0.0, McConfig(2000, 10, 0)):
        assert r.lhs == 0.0 and r.rhs == pytest.approx(0.0, abs=1e-15) and r.passed


def test_relative_entropy_gaussian_constant():
    reps = {r.name: r for r in relative_entropy_checks(gaussian_constant(64), 1.0, MC)}
    target = (1 - math.log(2)) / 2
    assert _within(reps["relative_entropy_energy"].lhs, target, reps["relative_entropy_energy"].stderr_lhs)
    assert all(r.passed for r in reps.values())


def test_relative_entropy_pm1():
    reps = relative_entropy_checks(PM1, 1.0, MC)
    assert [r.name for r in reps] == ["relative_entropy_causal", "relative_entropy_energy"]
    assert all(r.passed for r in reps)


def test_debruijn_gaussian_scalar():
    r = debruijn_check(G1, 1.0, MC)
    assert r.passed
    for v in (r.lhs, r.rhs, r.metadata["third"]):
        assert abs(v - 0.5) <= r.tolerance


def test_debruijn_atomic_fisher_forms_agree():
    r = debruijn_check(random_atomic(np.random.default_rng(1)), 1.2, MC)
    assert r.passed and r.aux_residual <= 1e-10


def test_debruijn_near_singular():
    r = debruijn_check(PM1, 0.005, MC, fd_step=1e-3)
    assert r.status == "near-singular" and r.passed
    with pytest.raises(ValueError):
        debruijn_check(PM1, 1.0, MC, fd_step=0.0)


def test_gsv_pm1():
    for rho in (0.5, 2.0):
        assert gsv_check(PM1, rho, MC).passed


def test_trace_identity():
    single = trace_identity_check(Atomic.point_mass([1.0, 2.0]), 1.0, McConfig(2000, 10, 0))
    assert single.lhs == 0.0 and single.rhs == pytest.approx(0.0, abs=1e-12) and single.passed
    pm = trace_identity_check(PM1, 1.0, MC)
    ref = quadrature_scalar(AtomicLaw.symmetric_sign(), 1.0)
    assert _within(pm.lhs, ref.E_trace, pm.stderr_lhs)
    three = Atomic(np.random.default_rng(2).standard_normal((3, 4)), [0.2, 0.3, 0.5])
    assert trace_identity_check(three, 1.0, McConfig(100_000, 50, 1)).passed


def test_trace_identity_rejects_sampler_only():
    prior = SamplerOnly(lambda rng, size: rng.standard_normal((size, 1)), 1)
    with pytest.raises(UnsupportedPrior):
        trace_identity_check(prior, 1.0, MC)


def test_lsi_gap_values():
    zero = lsi_gap(Atomic.point_mass(np.zeros(2)), 1.0, McConfig(2000, 10, 0))
    assert zero.lhs == 0.0 and zero.passed
    g = lsi_gap(gaussian_constant(8), 1.0, MC)
    assert _within(g.lhs, gaussian_closed_form(1.0, 1.0, 1.0).lsi_gap, g.stderr_lhs)


@pytest.mark.parametrize("seed", range(5))
def test_random_priors_satisfy_inequalities(seed):
    prior = random_atomic(np.random.default_rng(100 + seed), max_n=6)
    assert lsi_gap(prior, 1.0, McConfig(10_000, 20, seed)).passed
    assert causal_inequality_check(prior, 1.0, McConfig(10_000, 20, seed)).passed


def test_duncan_pm1_constant():
    for n in (64, 256):
        assert duncan_check(pm1_constant(n), 1.0, McConfig(20_000, 20, 6)).passed


def test_discretization_tolerance_reference():
    assert discretization_tolerance(1.0, 0.0, 16) == 0.0
    a, b = discretization_tolerance(1.0, 1.0, 64), discretization_tolerance(1.0, 1.0, 256)
    assert a > b > 0 and a / b == pytest.approx(4.0, rel=0.05)


# -- per-sample analytic checks ---------------------------------------------------------


def test_analytic_checks_pm1():
    for check in (gradient_identity_check, hessian_identity_check, moment_recursion_report,
                  number_identity_check):
        r = check(PM1, 1.0)
        assert r.passed, r


def test_number_identity_single_atom_exact():
    r = number_identity_check(Atomic.point_mass([0.5, -1.0]), 1.0, samples=20)
    assert r.lhs <= 1e-12


def test_number_identity_three_atoms():
    prior = Atomic(np.random.default_rng(3).standard_normal((3, 4)), [0.3, 0.3, 0.4])
    assert number_identity_check(prior, 1.0).lhs <= 1e-8


def test_analytic_checks_need_atomic():
    with pytest.raises(UnsupportedPrior):
        gradient_identity_check(G1, 1.0)
    with pytest.raises(UnsupportedPrior):
        number_identity_check(G1, 1.0)


# -- classical de Bruijn -------------------------------------------------------------


@pytest.mark.parametrize("s2, t", [(1.0, 1.0), (0.5, 0.2), (2.0, 3.0)])
def test_classical_debruijn_gaussian(s2, t):
    r = classical_debruijn_1d(GaussianLaw(0.0, s2), t)
    assert r.lhs == pytest.approx(1 / (2 * (s2 + t)), abs=1e-8)
    assert r.rhs == pytest.approx(1 / (2 * (s2 + t)), abs=1e-8)
    assert r.passed


def test_classical_debruijn_point_mass():
    r = classical_debruijn_1d(AtomicLaw([0.0], [1.0]), 0.5)
    assert r.lhs == pytest.approx(1.0, abs=1e-8) and r.rhs == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("t", [0.3, 1.0, 2.0])
def test_classical_debruijn_atomic(t):
    r = classical_debruijn_1d(AtomicLaw([-2.0, 0.5, 3.0], [0.2, 0.5, 0.3]), t)
    assert abs(r.residual) <= 1e-4 and r.passed


def test_classical_debruijn_validation():
    with pytest.raises(ValueError):
        classical_debruijn_1d(GaussianLaw(), 0.0)
    with pytest.raises(TypeError):
        classical_debruijn_1d("laplace", 1.0)


# -- battery and convergence ----------------------------------------------------------


def test_point_mass_battery_trivial():
    reps = verify_battery(Atomic.point_mass(np.zeros(4)), 1.0, McConfig(2000, 10, 0))
    assert all(r.passed for r in reps)
    zeros = [r for r in reps if r.status == "checked" and r.residual == 0.0]
    assert len(zeros) >= 5


def test_battery_names_pm1_constant():
    reps = verify_battery(pm1_constant(16), 1.0, McConfig(20_000, 20, 0))
    names = [r.name for r in reps]
    for expected in ("gradient_identity", "trace_identity", "debruijn", "gsv", "duncan",
                     "lsi_gap", "causal_energy_inequality"):
        assert expected in names
    assert all(r.passed for r in reps), [r.name for r in reps if not r.passed]


def test_project_prior_gaussian_variance():
    p = project_prior(GaussianDiagonal(np.zeros(4), [1.0, 3.0, 2.0, 2.0]), 2)
    np.testing.assert_allclose(p.variances, [2.0, 2.0])


def test_convergence_single_resolution_has_no_fit():
    st = convergence_study(pm1_constant(16), 1.0, McConfig(4000, 20, 0), [16])
    assert st.order is None and len(st.rows) == 1


def test_convergence_validation():
    with pytest.raises(ValueError):
        convergence_study(pm1_constant(16), 1.0, MC, [16, 8])
    with pytest.raises(ValueError):
        convergence_study(pm1_constant(16), 1.0, MC, [4, 8])
    with pytest.raises(ValueError):
        convergence_study(pm1_constant(12), 1.0, MC, [8, 12])


def test_convergence_residual_shrinks():
    st = convergence_study(gaussian_constant(64), 1.0, McConfig(20_000, 20, 0), [4, 16, 64])
    assert st.decreasing
    res = [abs(r.duncan_residual) for r in st.rows]
    assert res[-1] < res[0]
    assert 0.5 < st.order < 1.5
