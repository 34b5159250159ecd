import math

import numpy as np
import pytest

from watermark import (
    DomainError,
    InfiniteValue,
    ModelParams,
    RegimeError,
    Violation,
    build_surface,
    coeff_A,
    coeff_B,
    compute_roots,
    in_stopping_region,
    normalize_exponents,
    price_report,
    tilde_params,
    value_u,
    value_u_hat,
    value_v,
    value_v_hat,
    verify_vi,
)


def wedge_points(surface, size, seed=0):
    fb = surface.boundary
    rng = np.random.default_rng(seed)
    s = np.exp(rng.uniform(math.log(fb.s_min * 2), math.log(fb.s_max / 2), size))
    x = s * np.exp(rng.uniform(math.log(1e-3), 0.0, size))
    return x, s


def test_coefficients_positive_on_nodes(surf):
    s = surf.boundary.s
    assert np.all(coeff_A(s, surf) > 0)
    assert np.all(coeff_B(s, surf) > 0)


def test_positivity_equivalences(surf):
    fb, roots = surf.boundary, surf.roots
    m, n, K = roots.m, roots.n, 1.0
    ratio = fb.s**surf.p / fb.H
    assert np.all(ratio > n * K / (n + 1))
    if surf.p < 1:
        assert np.all(ratio > m * K / (m + 1))


def test_coefficients_match_printed_form(surf):
    m, n, K = surf.roots.m, surf.roots.n, 1.0
    s = np.exp(np.linspace(-3, 3, 50))
    H = surf.H(s)
    A = (-(m + 1) * s**surf.p / H + m * K) / (n - m) * H ** (-n)
    B = ((n + 1) * s**surf.p / H - n * K) / (n - m) * H ** (-m)
    np.testing.assert_allclose(coeff_A(s, surf), A, rtol=1e-8)
    np.testing.assert_allclose(coeff_B(s, surf), B, rtol=1e-12)


def test_smooth_fit_reconstruction(surf):
    s = surf.boundary.s[::20]
    H = surf.H(s)
    lhs = coeff_A(s, surf) * H**surf.roots.n + coeff_B(s, surf) * H**surf.roots.m
    rhs = s**surf.p / H - 1.0
    assert np.max(np.abs(lhs / rhs - 1)) < 1e-10


def test_deep_stopping_value(surf):
    for s in (0.1, 1.0, 30.0):
        H = float(surf.H(s))
        assert value_v(H / 2, s, surf) == pytest.approx(s**surf.p * 2 / H - 1.0, rel=1e-15)


def test_positive_and_dominates_obstacle(surf):
    x, s = wedge_points(surf, 100_000)
    w = value_v(x, s, surf)
    obstacle = np.maximum(s**surf.p / x - 1.0, 0.0)
    assert np.all(w > 0)
    assert np.all(w >= obstacle * (1 - 1e-12))
    stop = x <= surf.H(s)
    np.testing.assert_allclose(w[stop], (s**surf.p / x - 1.0)[stop], rtol=1e-14)


def test_continuous_and_c1_across_boundary(surf):
    s = 2.0
    H = float(surf.H(s))
    eps = 1e-7 * H
    left, right = value_v(H - eps, s, surf), value_v(H + eps, s, surf)
    assert abs(left - right) < 1e-5 * abs(left)
    slope_w = surf.w_waiting_x(H, s)
    assert slope_w == pytest.approx(-(s**surf.p) / H**2, rel=1e-8)


def test_region_flags(surf1):
    s = 3.0
    H = float(surf1.H(s))
    assert not in_stopping_region(s, s, surf1)
    assert in_stopping_region(H, s, surf1)
    assert not in_stopping_region(H * (1 + 1e-12), s, surf1)
    assert in_stopping_region(H / 10, s, surf1)
    # the stopping region sits inside the zone where the obstacle is favourable
    roots = surf1.roots
    bound = (roots.n + 1) * (roots.m + 1) * s**0.5 / (roots.n * roots.m)
    assert H <= bound


@pytest.mark.parametrize("x,s", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (2.0, 1.0), (float("nan"), 1.0)])
def test_domain_errors(surf1, x, s):
    with pytest.raises(DomainError):
        value_v(x, s, surf1)
    with pytest.raises(DomainError):
        in_stopping_region(x, s, surf1)


def test_infinite_value_is_distinguished(p1):
    big_p = p1.with_p(compute_roots(p1).n + 2.0)
    out = value_v(1.0, 1.0, big_p)
    assert isinstance(out, InfiniteValue)
    assert out.violated_condition is Violation.N_PLUS_1_MINUS_P_NONPOS
    assert float(out) == math.inf
    neg = value_v(0.5, 1.0, ModelParams(mu=-0.1, sigma=0.3, r=0.05, b=0.5))
    assert neg.violated_condition is Violation.M_PLUS_1_NONNEG
    with pytest.raises(RegimeError):
        build_surface(big_p)


def test_excluded_regimes_raise(p1):
    with pytest.raises(RegimeError, match="lookback"):
        value_v(1.0, 1.0, p1.with_p(1.0))
    with pytest.raises(RegimeError):
        value_v(1.0, 1.0, ModelParams(mu=0.03, sigma=0.2, r=0.01, b=0.5))
    with pytest.raises(RegimeError):
        value_v(1.0, 1.0, ModelParams(mu=0.05, sigma=0.2, r=0.1, a=2.0, b=1.0))


def test_params_and_surface_agree(p1, surf1):
    assert value_v(1.0, 1.0, p1) == value_v(1.0, 1.0, surf1)


def test_value_u_factorises(p1):
    pt, _ = tilde_params(p1)
    tilde = build_surface(pt)
    x, s = wedge_points(tilde, 1000, seed=4)
    u = value_u(x, s, p1)
    np.testing.assert_allclose(u / x, tilde.w(x, s), rtol=1e-15)
    deep_s = 2.0
    deep_x = float(tilde.H(deep_s)) / 3
    assert value_u(deep_x, deep_s, p1) == pytest.approx(deep_s**0.5 - deep_x, rel=1e-14)


def test_value_u_requires_tilde_condition():
    with pytest.raises(RegimeError):
        value_u(1.0, 1.0, ModelParams(mu=0.1, sigma=0.2, r=0.1, b=0.5))


def test_hat_identity_for_a1(p1, surf1):
    assert value_v_hat(0.7, 1.3, p1) == value_v(0.7, 1.3, surf1)
    assert value_u_hat(0.7, 1.3, p1) == value_u(0.7, 1.3, p1)


def test_hat_a2_b1_matches_squared_state():
    raw = ModelParams(mu=0.05, sigma=0.1, r=0.1, a=2.0, b=1.0)
    norm, _ = normalize_exponents(raw)
    rng = np.random.default_rng(12)
    s = np.exp(rng.uniform(-2, 2, 100))
    x = s * rng.uniform(0.05, 1.0, 100)
    direct = value_v(x**2, s**2, norm)
    assert np.max(np.abs(value_v_hat(x, s, raw) / direct - 1)) < 1e-10


@pytest.mark.parametrize("q", [0.5, 3.0])
def test_hat_scaling_invariance(q):
    # (a, b) = (q, q p) under the hatted drift that maps to the same normalised problem
    base = ModelParams(mu=0.05, sigma=0.2, r=0.1, a=1.0, b=0.5)
    sig = base.sigma / q
    mu = (base.mu - 0.5 * sig**2 * q * (q - 1)) / q
    raw = ModelParams(mu=mu, sigma=sig, r=0.1, a=q, b=q * 0.5)
    rng = np.random.default_rng(1)
    s = np.exp(rng.uniform(-1, 1, 20))
    x = s * rng.uniform(0.1, 1.0, 20)
    got = value_v_hat(x ** (1 / q), s ** (1 / q), raw)
    ref = value_v(x, s, base)
    assert np.max(np.abs(got / ref - 1)) < 1e-10


def test_verify_vi_thresholds(surf):
    rep = verify_vi(surf)
    assert rep.max_ode_residual_W < 1e-9
    assert rep.min_obstacle_gap_W >= -1e-9
    assert rep.max_f_in_S <= 1e-12
    assert rep.smooth_fit_value_err < 1e-8 and rep.smooth_fit_slope_err < 1e-8
    assert rep.max_bc_err < 1e-4
    assert rep.growth_ok and rep.growth_exponent <= rep.growth_exponent_bound + 0.05
    assert rep.min_gxx_jump > 0 and rep.max_gxx_jump_err < 1e-6
    assert rep.min_f_x_in_S > 0
    for key, val in rep.to_dict().items():
        if isinstance(val, float) and key.endswith("err"):
            assert math.isfinite(val) and val >= 0


def test_price_report(surf1):
    rep = price_report(1.0, 1.0, surf1)
    assert set(rep) == {"x", "s", "value", "region", "H_of_s"}
    assert rep["region"] == "waiting" and rep["value"] > 0
    H = rep["H_of_s"]
    assert price_report(H, 1.0, surf1)["region"] == "stopping"


def test_reference_values(p1, p2):
    # pinned regression values for the pricing pipeline
    assert value_v(1.0, 1.0, p1) == pytest.approx(0.20278762163877084, rel=1e-9)
    assert value_u(1.0, 1.0, p1) == pytest.approx(0.16339074426367434, rel=1e-9)
    assert value_v(1.0, 1.0, p2) == pytest.approx(0.6222930201980694, rel=1e-9)
