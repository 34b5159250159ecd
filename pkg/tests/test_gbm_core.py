import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from watermark import (
    ModelParams,
    PRegime,
    ValidationError,
    Violation,
    classify_regime,
    compute_roots,
    normalize_exponents,
    russian_reduction,
    tilde_params,
)
from watermark.gbm_core import quadratic_residual


def test_p1_roots_solve_the_quadratic(p1):
    roots = compute_roots(p1)
    assert roots.m == pytest.approx(-3.10850, abs=5e-6)
    assert roots.n == pytest.approx(1.60850, abs=5e-6)
    for k in (roots.m, roots.n):
        assert quadratic_residual(p1, k) < 1e-12
    assert roots.n * roots.m == pytest.approx(-5.0, rel=1e-14)


def test_symmetric_roots_when_linear_term_vanishes():
    sigma, r = 0.3, 0.07
    roots = compute_roots(ModelParams(mu=0.5 * sigma**2, sigma=sigma, r=r))
    assert roots.n == pytest.approx(math.sqrt(2 * r) / sigma, rel=1e-14)
    assert roots.m == pytest.approx(-math.sqrt(2 * r) / sigma, rel=1e-14)


@pytest.mark.parametrize(
    "field,kwargs",
    [
        ("sigma", dict(mu=0.05, sigma=0.0, r=0.1)),
        ("r", dict(mu=0.05, sigma=0.2, r=0.0)),
        ("r", dict(mu=0.05, sigma=0.2, r=-1.0)),
        ("K", dict(mu=0.05, sigma=0.2, r=0.1, K=0.0)),
        ("a", dict(mu=0.05, sigma=0.2, r=0.1, a=-1.0)),
        ("b", dict(mu=0.05, sigma=0.2, r=0.1, b=0.0)),
        ("mu", dict(mu=float("nan"), sigma=0.2, r=0.1)),
        ("sigma", dict(mu=0.0, sigma="x", r=0.1)),
    ],
)
def test_invalid_params_name_the_field(field, kwargs):
    with pytest.raises(ValidationError) as err:
        ModelParams(**kwargs)
    assert err.value.field == field
    assert str(err.value).startswith(field)


def test_gamma_case_split():
    below = compute_roots(ModelParams(mu=0.01, sigma=0.2, r=0.1))
    assert below.gamma == below.gamma1
    above = compute_roots(ModelParams(mu=0.05, sigma=0.2, r=0.1))
    assert above.gamma == above.gamma2 == 1.0
    m, n = below.m, below.n
    assert below.gamma1 == pytest.approx((n + 1) * (m + 1) / (n * m), rel=1e-13)


def test_p1_assumption_holds(p1):
    rep = classify_regime(p1)
    assert rep.assumption_a_holds and not rep.value_infinite
    assert rep.m_plus_1 == pytest.approx(-2.1085, abs=1e-4)
    assert rep.n_plus_1_minus_p == pytest.approx(2.1085, abs=1e-4)
    assert rep.p_regime is PRegime.P_BELOW_1


def test_r_plus_mu_below_sigma2_is_infinite():
    rep = classify_regime(ModelParams(mu=-0.05, sigma=0.3, r=0.1))
    assert rep.violated_condition is Violation.M_PLUS_1_NONNEG
    assert rep.value_infinite and not rep.assumption_a_holds


def test_large_p_is_infinite(p1):
    n = compute_roots(p1).n
    rep = classify_regime(p1.with_p(n + 1.5))
    assert rep.violated_condition is Violation.N_PLUS_1_MINUS_P_NONPOS
    assert rep.value_infinite


def test_equality_is_flagged_not_classified():
    # m = -1 exactly when mu = sigma^2 - r
    rep = classify_regime(ModelParams(mu=0.04 - 0.01, sigma=0.2, r=0.01))
    assert rep.violated_condition is Violation.BOUNDARY_EQUALITY
    assert not rep.assumption_a_holds and not rep.value_infinite


def test_p_equal_one_regime(p1):
    assert classify_regime(p1.with_p(1.0)).p_regime is PRegime.P_EQUAL_1


params_strategy = st.builds(
    ModelParams,
    mu=st.floats(-0.5, 0.5),
    sigma=st.floats(0.02, 1.5),
    r=st.floats(1e-3, 0.5),
    K=st.floats(0.1, 10.0),
    a=st.just(1.0),
    b=st.floats(0.05, 4.0),
)


@settings(max_examples=300, deadline=None)
@given(params_strategy)
def test_roots_and_regime_properties(params):
    roots = compute_roots(params)
    assert roots.m < 0.0 < roots.n
    assert quadratic_residual(params, roots.m) < 1e-12
    assert quadratic_residual(params, roots.n) < 1e-12
    s2 = params.sigma2
    assert roots.n * roots.m == pytest.approx(-2 * params.r / s2, rel=1e-12)
    assert roots.n + roots.m == pytest.approx(1 - 2 * params.mu / s2, rel=1e-12, abs=1e-12)
    rep = classify_regime(params, roots)
    if abs(rep.m_plus_1) > 1e-10:
        assert (roots.m + 1 < 0) == (params.r + params.mu > s2)
    assert (roots.n > 1) == (params.mu < params.r) or abs(roots.n - 1) < 1e-12


def test_normalize_identity(p1):
    norm, pmap = normalize_exponents(p1)
    assert norm == p1
    assert pmap(2.0, 3.0) == (2.0, 3.0)


def test_normalize_a2_b1():
    norm, pmap = normalize_exponents(ModelParams(mu=0.05, sigma=0.1, r=0.1, a=2.0, b=1.0))
    assert norm.mu == pytest.approx(0.11, rel=1e-14)
    assert norm.sigma == pytest.approx(0.2, rel=1e-14)
    assert norm.p == 0.5 and norm.a == 1.0
    assert pmap(2.0, 3.0) == (4.0, 9.0)


@pytest.mark.parametrize("q", [0.5, 2.0, 3.7])
def test_scaling_exponents_keeps_p(q):
    raw = ModelParams(mu=0.03, sigma=0.25, r=0.1, a=q, b=q * 0.6)
    norm, _ = normalize_exponents(raw)
    assert norm.p == pytest.approx(0.6, rel=1e-15)
    assert norm.sigma == pytest.approx(0.25 * q)
    assert norm.mu == pytest.approx(0.5 * 0.0625 * q * (q - 1) + 0.03 * q)


def test_tilde_params_p1(p1):
    pt, rep = tilde_params(p1)
    assert pt.mu == pytest.approx(0.09) and pt.r == pytest.approx(0.05)
    assert pt.mu - p1.mu == p1.sigma2
    assert pt.r + p1.mu == p1.r
    assert rep.holds and rep.r_tilde_positive
    m, n = rep.roots_tilde.m, rep.roots_tilde.n
    for k in (m, n):
        lhs = 0.02 * k * k + 0.07 * k - 0.05
        assert abs(lhs) / (abs(0.02 * k * k) + abs(0.07 * k) + 0.05) < 1e-12
    assert rep.m_tilde_plus_1 < 0


def test_tilde_fails_when_mu_equals_r():
    pt, rep = tilde_params(ModelParams(mu=0.1, sigma=0.2, r=0.1))
    assert pt is None and not rep.holds and not rep.r_tilde_positive


def test_russian_identity_for_classical_case():
    d = russian_reduction(mu=0.05, sigma=0.2, r=0.1, a=0.0, b=1.0)
    assert (d.drift, d.volatility, d.discount) == (0.05, 0.2, 0.1)
    assert d.prefactor_exponent == 0.0


def test_russian_mapping_a1_b1():
    d = russian_reduction(ModelParams(mu=0.05, sigma=0.2, r=0.1, a=1.0, b=1.0))
    assert d.drift == pytest.approx(0.01, rel=1e-12)
    assert d.volatility == pytest.approx(0.2)
    assert d.discount == pytest.approx(0.11, rel=1e-12)
    assert d.prefactor_exponent == -1.0


def test_russian_state_map():
    d = russian_reduction(mu=0.0, sigma=0.2, r=0.1, a=1.0, b=0.5)
    assert d.state_map(4.0) == pytest.approx(2.0)


def test_russian_requires_fields():
    with pytest.raises(ValidationError):
        russian_reduction(mu=0.0, sigma=0.2, r=0.1, b=1.0)


def test_regime_report_serializes(p1):
    d = classify_regime(p1).to_dict()
    assert d["violated_condition"] == "none" and d["p_regime"] == "p_below_1"
    assert np.isfinite(d["m_plus_1"])
