"""Value functions of the watermark stopping problems and their verification.

On the wedge ``0 < x <= s`` the value is the obstacle ``s^p/x - K`` in the
stopping region ``x <= H(s)`` and ``A(s) x^n + B(s) x^m`` above it, with
``A`` and ``B`` fixed by value and slope matching at ``x = H(s)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, RegimeError
from .free_boundary import FreeBoundary, IntegratorConfig, eval_H, solve_separatrix
from .gbm_core import (
    ModelParams,
    PRegime,
    Roots,
    Violation,
    classify_regime,
    compute_roots,
    normalize_exponents,
    tilde_params,
)

__all__ = [
    "InfiniteValue",
    "ValueSurface",
    "SampleConfig",
    "ViReport",
    "build_surface",
    "coeff_A",
    "coeff_B",
    "value_v",
    "value_u",
    "value_v_hat",
    "value_u_hat",
    "in_stopping_region",
    "price_report",
    "verify_vi",
]


@dataclass(frozen=True)
class InfiniteValue:
    """Returned instead of a price when the value is identically infinite."""

    violated_condition: Violation

    def __float__(self) -> float:
        return math.inf

    def to_dict(self) -> dict:
        return {"value": "inf", "violated_condition": self.violated_condition.value}


@dataclass(frozen=True)
class ValueSurface:
    """Closed-form value ``w(x, s)`` built on a solved free boundary."""

    params: ModelParams
    roots: Roots
    boundary: FreeBoundary = field(repr=False)

    @property
    def p(self) -> float:
        return self.params.p

    def H(self, s):
        return eval_H(self.boundary, s)

    def _leads(self, s):
        """``H(s)`` and the bracketed factors of ``A`` and ``B`` divided by ``n - m``."""
        m, n, K = self.roots.m, self.roots.n, self.params.K
        H = self.H(s)
        sp = np.power(s, self.p)
        q = sp / H
        if self.p < 1.0:
            # -(m+1) q + m K = -(m+1) (q - 1/c) with c = (m+1)/(mK); written
            # through H / (c s^p) it is exactly zero on the asymptote
            c = self.boundary.c
            rho = H / (c * sp)
            lead_A = -(m + 1.0) / c * (1.0 - rho) / rho / (n - m)
        else:
            lead_A = (-(m + 1.0) * q + m * K) / (n - m)
        lead_B = ((n + 1.0) * q - n * K) / (n - m)
        return H, lead_A, lead_B

    def _branch_terms(self, x, s):
        # A x^n and B x^m written with z = x / H(s) so no H^-n power is formed
        H, lead_A, lead_B = self._leads(s)
        lz = np.log(x) - np.log(H)
        return lead_A * np.exp(self.roots.n * lz), lead_B * np.exp(self.roots.m * lz)

    def w_waiting(self, x, s):
        """Waiting-region branch, evaluated wherever asked."""
        tA, tB = self._branch_terms(np.asarray(x, float), np.asarray(s, float))
        return tA + tB

    def w_waiting_x(self, x, s):
        x = np.asarray(x, float)
        tA, tB = self._branch_terms(x, np.asarray(s, float))
        return (self.roots.n * tA + self.roots.m * tB) / x

    def w_waiting_xx(self, x, s):
        x = np.asarray(x, float)
        m, n = self.roots.m, self.roots.n
        tA, tB = self._branch_terms(x, np.asarray(s, float))
        return (n * (n - 1.0) * tA + m * (m - 1.0) * tB) / (x * x)

    def obstacle(self, x, s):
        return np.power(s, self.p) / x - self.params.K

    def w(self, x, s):
        x, s = _check_wedge(x, s)
        stop = x <= self.H(s)
        out = np.where(stop, self.obstacle(x, s), self.w_waiting(x, s))
        return out[()] if out.ndim == 0 else out

    def __call__(self, x, s):
        return self.w(x, s)


def _check_wedge(x, s):
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s))):
        raise DomainError("x and s must be finite")
    if np.any(x <= 0.0) or np.any(s <= 0.0):
        raise DomainError("x and s must be positive")
    if np.any(x > s):
        raise DomainError("x must not exceed the running maximum s")
    return np.broadcast_arrays(x, s)


def _gate(params: ModelParams):
    if params.a != 1.0:
        raise RegimeError("expected normalised parameters (a = 1); use the hatted wrappers")
    report = classify_regime(params)
    if report.p_regime is PRegime.P_EQUAL_1:
        raise RegimeError(
            "p = 1 reduces to the perpetual lookback option with floating strike, "
            "which this package does not price"
        )
    if report.violated_condition is Violation.BOUNDARY_EQUALITY:
        raise RegimeError("m + 1 = 0 or n + 1 - p = 0: neither finite nor infinite value is established")
    return report


@lru_cache(maxsize=32)
def _cached_surface(params: ModelParams, delta, cfg: IntegratorConfig) -> ValueSurface:
    roots = compute_roots(params)
    fb = solve_separatrix(params, roots, delta=delta, cfg=cfg)
    return ValueSurface(params=params, roots=roots, boundary=fb)


def build_surface(
    params: ModelParams, delta: float | None = None, cfg: IntegratorConfig | None = None
) -> ValueSurface:
    """Solve the free boundary for ``params`` and wrap it; results are cached."""
    report = _gate(params)
    if not report.assumption_a_holds:
        raise RegimeError(f"value is infinite: {report.violated_condition.value}")
    return _cached_surface(params, delta, cfg or IntegratorConfig())


def coeff_A(s, surface: ValueSurface):
    """``A(s) = [-(m+1) s^p / H + m K] / (n - m) * H^-n``."""
    H, lead_A, _ = surface._leads(np.asarray(s, float))
    out = lead_A * np.exp(-surface.roots.n * np.log(H))
    return out[()] if np.ndim(out) == 0 else out


def coeff_B(s, surface: ValueSurface):
    """``B(s) = [(n+1) s^p / H - n K] / (n - m) * H^-m``."""
    H, _, lead_B = surface._leads(np.asarray(s, float))
    out = lead_B * np.exp(-surface.roots.m * np.log(H))
    return out[()] if np.ndim(out) == 0 else out


def _resolve(target) -> ValueSurface | InfiniteValue:
    if isinstance(target, ValueSurface):
        return target
    if not isinstance(target, ModelParams):
        raise TypeError("expected a ValueSurface or ModelParams")
    report = _gate(target)
    if report.value_infinite:
        return InfiniteValue(report.violated_condition)
    return build_surface(target)


def value_v(x, s, surface):
    """Value of ``sup E[e^{-r tau} (S_tau^p / X_tau - K)^+]``.

    Parameters
    ----------
    x, s : float or array_like
        Current price and running maximum, ``0 < x <= s``.
    surface : ValueSurface or ModelParams
        A prebuilt surface, or normalised parameters from which one is built.

    Returns
    -------
    float, ndarray or InfiniteValue
        :class:`InfiniteValue` when the parameters strictly violate the
        finite-value condition.
    """
    surf = _resolve(surface)
    if isinstance(surf, InfiniteValue):
        _check_wedge(x, s)
        return surf
    return surf.w(x, s)


def _tilde_surface(params: ModelParams) -> ValueSurface:
    pt, rep = tilde_params(params)
    if not rep.holds:
        raise RegimeError(f"finite-value condition for the (S^p - K X)^+ problem fails: {rep.to_dict()}")
    return build_surface(pt)


def value_u(x, s, params: ModelParams):
    """Value of ``sup E[e^{-r tau} (S_tau^p - K X_tau)^+]`` as ``x * v_tilde(x, s)``.

    ``v_tilde`` is the ``(S^p/X - K)^+`` value under drift ``mu + sigma^2``
    and discount ``r - mu``.
    """
    if params.a != 1.0:
        raise RegimeError("expected normalised parameters (a = 1); use value_u_hat")
    surf = _tilde_surface(params)
    x, s = _check_wedge(x, s)
    out = x * surf.w(x, s)
    return out[()] if out.ndim == 0 else out


def value_v_hat(x_hat, s_hat, raw_params: ModelParams):
    """``(S^b / X^a - K)^+`` value, via ``v(x_hat^a, s_hat^a)`` under mapped dynamics."""
    norm, pmap = normalize_exponents(raw_params)
    x_hat, s_hat = _check_wedge(x_hat, s_hat)
    return value_v(*pmap(x_hat, s_hat), norm)


def value_u_hat(x_hat, s_hat, raw_params: ModelParams):
    """``(S^b - K X^a)^+`` value, via ``u(x_hat^a, s_hat^a)`` under mapped dynamics."""
    norm, pmap = normalize_exponents(raw_params)
    x_hat, s_hat = _check_wedge(x_hat, s_hat)
    return value_u(*pmap(x_hat, s_hat), norm)


def in_stopping_region(x, s, surface: ValueSurface):
    """True iff ``x <= H(s)``; the boundary itself belongs to the stopping region."""
    x, s = _check_wedge(x, s)
    out = x <= surface.H(s)
    return out[()] if out.ndim == 0 else out


def price_report(x: float, s: float, surface: ValueSurface, value=None) -> dict:
    """JSON-ready price query result ``{x, s, value, region, H_of_s}``."""
    value = surface.w(x, s) if value is None else value
    return {
        "x": float(x),
        "s": float(s),
        "value": float(value),
        "region": "stopping" if bool(in_stopping_region(x, s, surface)) else "waiting",
        "H_of_s": float(surface.H(s)),
    }


@dataclass(frozen=True)
class SampleConfig:
    """Sampling grid of :func:`verify_vi`."""

    n_s: int = 200
    n_wait: int = 100
    n_stop: int = 20
    stop_ratio_floor: float = 1e-3
    wait_offset: float = 1e-6
    fd_step: float = 1e-4


@dataclass(frozen=True)
class ViReport:
    """Worst-case diagnostics of the variational inequality.

    Residuals and gaps are scaled: the ODE residual by the sum of the absolute
    generator terms, ``g`` by ``s^p / x``, smooth-fit errors relative to the
    obstacle branch, and ``w_s(s, s)`` by ``p / s`` times the summed magnitudes
of the parts of ``A s^n + B s^m``.
    """

    max_ode_residual_W: float
    min_obstacle_gap_W: float
    max_f_in_S: float
    smooth_fit_value_err: float
    smooth_fit_slope_err: float
    max_bc_err: float
    growth_ok: bool
    growth_exponent: float
    growth_exponent_bound: float
    growth_C: float
    min_gxx_jump: float
    max_gxx_jump_err: float
    min_f_x_in_S: float
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _smooth_fit_errors(surface: ValueSurface, s):
    H = surface.H(s)
    obs = surface.obstacle(H, s)
    scale = np.power(s, surface.p) / H
    val = np.abs(surface.w_waiting(H, s) - obs) / scale
    slope_obs = -np.power(s, surface.p) / (H * H)
    slope = np.abs(surface.w_waiting_x(H, s) - slope_obs) / np.abs(slope_obs)
    return val, slope


def _bc_errors(surface: ValueSurface, s, h_rel: float):
    # inward (increasing s) one-sided differences of w(x, .) at x = s,
    # Richardson-extrapolated over steps h and h/2
    h = h_rel * s
    w0 = surface.w_waiting(s, s)

    def d(step):
        return (surface.w(s, s + step) - w0) / step

    est = 2.0 * d(0.5 * h) - d(h)
    return np.abs(est) / _bc_scale(surface, s)


def _bc_scale(surface: ValueSurface, s):
    # p/s times the summed magnitudes of the four parts of A s^n + B s^m;
    # w(s, s) itself can be a near-cancellation far above the boundary
    m, n, K = surface.roots.m, surface.roots.n, surface.params.K
    H = surface.H(s)
    q = np.power(s, surface.p) / H
    lz = np.log(s) - np.log(H)
    parts = (np.abs(m + 1.0) * q + np.abs(m) * K) * np.exp(n * lz) + ((n + 1.0) * q + n * K) * np.exp(m * lz)
    return surface.p / s * parts / (n - m)


def verify_vi(surface: ValueSurface, sample_cfg: SampleConfig | None = None) -> ViReport:
    """Check the variational inequality on a log-spaced wedge grid."""
    cfg = sample_cfg or SampleConfig()
    fb = surface.boundary
    m, n, K = surface.roots.m, surface.roots.n, surface.params.K
    mu, s2, r, p = surface.params.mu, surface.params.sigma2, surface.params.r, surface.p
    s = np.exp(np.linspace(math.log(2.0 * fb.s_min), math.log(0.5 * fb.s_max), cfg.n_s))
    H = surface.H(s)
    sp = np.power(s, p)

    # waiting region: ratios from just above H(s)/s up to the diagonal
    u = np.linspace(0.0, 1.0, cfg.n_wait)
    lo = np.log(H * (1.0 + cfg.wait_offset))
    X = np.exp(lo[:, None] + u[None, :] * (np.log(s) - lo)[:, None])
    X[:, -1] = s
    S = np.broadcast_to(s[:, None], X.shape)
    tA, tB = surface._branch_terms(X, S)
    w = tA + tB
    terms = []
    for k, t in ((n, tA), (m, tB)):
        terms.append(0.5 * s2 * k * (k - 1.0) * t)
        terms.append(mu * k * t)
        terms.append(-r * t)
    resid = np.abs(sum(terms)) / sum(np.abs(t) for t in terms)
    g = w - np.power(S, p) / X + K
    g_scaled = g / (np.power(S, p) / X)

    # stopping region: ratios down from H(s)/s
    v = np.linspace(0.0, 1.0, cfg.n_stop)
    Xs = H[:, None] * np.exp(v[None, :] * math.log(cfg.stop_ratio_floor))
    Xs[:, 0] = H
    coef = 0.5 * s2 - (mu - 0.5 * s2) - r
    f = coef * sp[:, None] / Xs + r * K
    f_x = -coef * sp[:, None] / (Xs * Xs)

    sf_val, sf_slope = _smooth_fit_errors(surface, fb.s[(fb.s >= s[0]) & (fb.s <= s[-1])])
    bc = _bc_errors(surface, s, cfg.fd_step)

    # second derivative of g just above the boundary against its closed form
    q = sp / H
    gxx_closed = (-(1.0 + n + m + n * m) * q + n * m * K) / (H * H)
    gxx_num = surface.w_waiting_xx(H, s) - 2.0 * sp / H**3
    gxx_err = np.abs(gxx_num - gxx_closed) / np.abs(gxx_closed)

    # growth of sup_x w(x, s) over the upper half of the s range
    gamma = n * (1.0 - p) if p < 1.0 else p - 1.0
    wmax = w.max(axis=1)
    upper = s >= math.sqrt(s[0] * s[-1])
    slope_fit = np.polyfit(np.log(s[upper]), np.log(wmax[upper]), 1)[0]
    C = float(np.max(wmax / (1.0 + s**gamma)))

    return ViReport(
        max_ode_residual_W=float(resid.max()),
        min_obstacle_gap_W=float(g_scaled.min()),
        max_f_in_S=float(f.max()),
        smooth_fit_value_err=float(sf_val.max()),
        smooth_fit_slope_err=float(sf_slope.max()),
        max_bc_err=float(bc.max()),
        growth_ok=bool(slope_fit <= gamma + 0.05),
        growth_exponent=float(slope_fit),
        growth_exponent_bound=float(gamma),
        growth_C=C,
        min_gxx_jump=float(gxx_num.min()),
        max_gxx_jump_err=float(gxx_err.max()),
        min_f_x_in_S=float(f_x.min()),
        n_samples=int(w.size + f.size),
    )
