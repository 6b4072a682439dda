import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, stats

from wienerchannel.identities import mutual_info_direct
from wienerchannel.montecarlo import McConfig
from wienerchannel.oracle import (
    QuadratureBudgetExceeded,
    QuadratureNonConvergence,
    gauss_hermite,
    gaussian_closed_form,
    golden_records,
    quadrature_scalar,
    tensor_quadrature,
)
from wienerchannel.priors import Atomic, AtomicLaw, GaussianLaw

GOLDEN = Path(__file__).parent / "data" / "golden_oracle.json"


@pytest.mark.parametrize("order", [2, 8, 64, 128])
def test_rule_normalized(order):
    r = gauss_hermite(order)
    assert r.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert r.weights @ r.nodes**2 == pytest.approx(1.0, abs=1e-12)


def test_rule_rejects_zero_order():
    with pytest.raises(ValueError):
        gauss_hermite(0)


def test_gaussian_closed_form_rho_zero():
    g = gaussian_closed_form(2.0, 3.0, 0.0)
    assert g.I == 0.0 and g.rel_ent == 0.0
    assert g.mmse_nc == 6.0 and g.mmse_c_integral == 6.0


def test_gaussian_closed_form_reference_values():
    g = gaussian_closed_form(1.0, 1.0, 1.0)
    assert g.I == pytest.approx(0.5 * math.log(2), abs=1e-15)
    assert g.I == pytest.approx(0.346574, abs=1e-6)
    assert g.mmse_nc == 0.5
    assert g.mmse_c_integral == pytest.approx(math.log(2), abs=1e-15)
    assert g.rel_ent == pytest.approx((1 - math.log(2)) / 2, abs=1e-15)
    assert g.rel_ent == pytest.approx(0.153426, abs=1e-6)
    assert g.lsi_gap == pytest.approx(0.096574, abs=1e-6)


@pytest.mark.parametrize("sigma2, T, rho", [(1.0, 1.0, 1.0), (0.3, 2.0, 0.7), (4.0, 0.5, 2.5)])
def test_gaussian_closed_form_consistency(sigma2, T, rho):
    g = gaussian_closed_form(sigma2, T, rho)
    assert g.I == pytest.approx(0.5 * rho**2 * g.mmse_c_integral, rel=1e-14)
    assert g.rel_ent == pytest.approx(0.5 * rho**2 * g.energy - g.I, rel=1e-14)
    assert g.rel_ent == pytest.approx(0.5 * rho**2 * g.E_xhat2, rel=1e-12)
    # mmse_c integral checked by direct integration
    val, _ = integrate.quad(lambda t: sigma2 / (1 + rho**2 * sigma2 * t), 0, T)
    assert g.mmse_c_integral == pytest.approx(val, rel=1e-10)


def test_gaussian_closed_form_validation():
    with pytest.raises(ValueError):
        gaussian_closed_form(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        gaussian_closed_form(1.0, 0.0, 1.0)


def test_quadrature_point_mass():
    o = quadrature_scalar(AtomicLaw([1.5], [1.0]), 1.0)
    assert o.I == pytest.approx(0.0, abs=1e-12)
    assert o.mmse_nc == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("rho", [0.0, 0.5, 1.0, 2.0])
def test_quadrature_gaussian_matches_closed_form(rho):
    o = quadrature_scalar(GaussianLaw(0.0, 1.0), rho)
    g = gaussian_closed_form(1.0, 1.0, rho)
    assert o.I == pytest.approx(g.I, abs=1e-8)
    assert o.mmse_nc == pytest.approx(g.mmse_nc, abs=1e-8)
    assert o.E_log_ell == pytest.approx(g.rel_ent, abs=1e-8)


def _pm1_by_adaptive_quadrature(rho):
    """Independent reference: adaptive integration of the mixture density."""
    def p(v):
        return 0.5 * (stats.norm.pdf(v - rho) + stats.norm.pdf(v + rho))

    def i_integrand(v):
        lf = stats.norm.logpdf(v - rho)
        lp = np.logaddexp(lf, stats.norm.logpdf(v + rho)) - math.log(2)
        return math.exp(lf) * (lf - lp)

    def mmse_integrand(v):
        return p(v) * (1 - math.tanh(rho * v) ** 2)

    I, _ = integrate.quad(i_integrand, -20, 20, epsabs=1e-13, limit=200)
    m, _ = integrate.quad(mmse_integrand, -20, 20, epsabs=1e-13, limit=200)
    return I, m


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_pm1_quadrature_matches_adaptive_integration(rho):
    o = quadrature_scalar(AtomicLaw.symmetric_sign(), rho)
    I, m = _pm1_by_adaptive_quadrature(rho)
    assert o.I == pytest.approx(I, abs=1e-6)
    assert o.mmse_nc == pytest.approx(m, abs=1e-6)
    assert o.E_log_ell == pytest.approx(rho**2 / 2 - o.I, abs=1e-12)
    assert o.E_trace == pytest.approx(rho**2 * o.mmse_nc, abs=1e-6)


def test_quadrature_self_validation():
    o = quadrature_scalar(AtomicLaw.symmetric_sign(), 1.0, 64)
    lo = quadrature_scalar(AtomicLaw.symmetric_sign(), 1.0, 64, tol=1.0)
    assert o.doubling_delta <= 1e-6
    assert abs(o.I - lo.I) <= 1e-8
    with pytest.raises(QuadratureNonConvergence):
        quadrature_scalar(AtomicLaw.symmetric_sign(), 4.0, 32, tol=1e-15, max_order=64)
    with pytest.raises(ValueError):
        quadrature_scalar(AtomicLaw.symmetric_sign(), 1.0, 16)
    with pytest.raises(TypeError):
        quadrature_scalar("uniform", 1.0)


def test_tensor_n1_reduces_to_scalar():
    law = AtomicLaw([-1.0, 0.5, 2.0], [0.2, 0.5, 0.3])
    t = tensor_quadrature(Atomic(law.values[:, None], law.weights), 0.8, order=64)
    s = quadrature_scalar(law, 0.8, 32, tol=1.0)  # one doubling: order 64
    assert s.order == 64
    assert t.I == pytest.approx(s.I, abs=1e-10)
    assert t.mmse_nc == pytest.approx(s.mmse_nc, abs=1e-10)
    assert t.rel_ent == pytest.approx(s.E_log_ell, abs=1e-10)


def test_tensor_n2_independent_coordinates_add():
    a = AtomicLaw([-1.0, 1.0], [0.5, 0.5])
    b = AtomicLaw([0.0, 1.5], [0.3, 0.7])
    atoms = np.array([[x, y] for x in a.values for y in b.values])
    weights = np.array([p * q for p in a.weights for q in b.weights])
    t = tensor_quadrature(Atomic(atoms, weights), 1.0, order=60)
    total = quadrature_scalar(a, 1.0).I + quadrature_scalar(b, 1.0).I
    assert t.I == pytest.approx(total, abs=1e-8)


def test_tensor_n2_correlated_matches_monte_carlo():
    prior = Atomic([[1.0, 0.8], [-1.0, -0.6]], [0.4, 0.6])
    t = tensor_quadrature(prior, 1.0)
    I, se = mutual_info_direct(prior, 1.0, McConfig(100_000, 50, seed=2))
    assert abs(I - t.I) <= 4 * se


def test_tensor_budget():
    with pytest.raises(QuadratureBudgetExceeded):
        tensor_quadrature(Atomic(np.zeros((1, 4)), [1.0]), 1.0)
    with pytest.raises(QuadratureBudgetExceeded):
        tensor_quadrature(Atomic(np.zeros((1, 3)), [1.0]), 1.0, order=200)


def test_golden_file_is_current():
    data = json.loads(GOLDEN.read_text())
    fresh = golden_records()
    assert len(data["records"]) == len(fresh)
    for old, new in zip(data["records"], fresh):
        assert old["model"] == new["model"] and old["quantity"] == new["quantity"]
        assert old["value"] == pytest.approx(new["value"], abs=1e-12)


def test_golden_pm1_values_independent():
    data = json.loads(GOLDEN.read_text())
    for rec in data["records"]:
        if rec["model"] == "pm1_scalar" and rec["quantity"] in ("I", "mmse_nc"):
            I, m = _pm1_by_adaptive_quadrature(rec["params"]["rho"])
            ref = I if rec["quantity"] == "I" else m
            assert rec["value"] == pytest.approx(ref, abs=1e-6)
