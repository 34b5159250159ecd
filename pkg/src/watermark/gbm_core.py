"""Model parameters, characteristic roots, regime gates and parameter reductions.

The asset follows ``dX = mu X dt + sigma X dW`` and ``S`` is its running
maximum started at ``s >= x``.  Everything downstream works with the
normalised problem ``a = 1``, ``b = p``; :func:`normalize_exponents` maps a
general ``(a, b)`` contract onto it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

from .errors import ValidationError

__all__ = [
    "ModelParams",
    "Roots",
    "Violation",
    "PRegime",
    "RegimeReport",
    "AssumptionANReport",
    "PowerMap",
    "ReductionDescriptor",
    "compute_roots",
    "quadratic_residual",
    "classify_regime",
    "normalize_exponents",
    "tilde_params",
    "russian_reduction",
    "EQUALITY_TOL",
]

# |m+1| or |n+1-p| below this is treated as the excluded equality case.
EQUALITY_TOL = 1e-10
_P_ONE_TOL = 1e-12


def _check_finite(field: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(field, f"expected a number, got {value!r}") from None
    if not math.isfinite(value):
        raise ValidationError(field, f"must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Market and contract data of a watermark option.

    Parameters
    ----------
    mu : float
        Drift of the underlying.
    sigma : float
        Volatility, nonzero.  Only ``sigma**2`` enters the pricing.
    r : float
        Discount rate, ``r > 0``.
    K : float
        Strike level, ``K > 0``.
    a, b : float
        Exponents of the payoff ``(S**b / X**a - K)^+``; both positive.
    """

    mu: float
    sigma: float
    r: float
    K: float = 1.0
    a: float = 1.0
    b: float = 0.5

    def __post_init__(self) -> None:
        for name in ("mu", "sigma", "r", "K", "a", "b"):
            object.__setattr__(self, name, _check_finite(name, getattr(self, name)))
        if self.sigma == 0.0:
            raise ValidationError("sigma", "must be nonzero")
        if self.r <= 0.0:
            raise ValidationError("r", f"must be positive, got {self.r}")
        if self.K <= 0.0:
            raise ValidationError("K", f"must be positive, got {self.K}")
        if self.a <= 0.0:
            raise ValidationError("a", f"must be positive, got {self.a}")
        if self.b <= 0.0:
            raise ValidationError("b", f"must be positive, got {self.b}")

    @property
    def p(self) -> float:
        return self.b / self.a

    @property
    def sigma2(self) -> float:
        return self.sigma * self.sigma

    def with_p(self, p: float) -> "ModelParams":
        """Same market, normalised contract ``a = 1, b = p``."""
        return replace(self, a=1.0, b=float(p))

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "r": self.r, "K": self.K, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Roots:
    """Roots ``m < 0 < n`` of ``sigma^2 k^2 / 2 + (mu - sigma^2/2) k - r = 0``
    together with the envelope coefficients of the free-boundary domain."""

    m: float
    n: float
    gamma1: float
    gamma2: float
    gamma: float

    def to_dict(self) -> dict:
        return {"m": self.m, "n": self.n, "gamma1": self.gamma1, "gamma2": self.gamma2, "gamma": self.gamma}


def compute_roots(params: ModelParams) -> Roots:
    """Closed-form roots, evaluated without cancellation.

    The larger-magnitude root comes from the quadratic formula and the other
    from the product ``n m = -2 r / sigma^2``.
    """
    s2 = params.sigma2
    beta = (params.mu - 0.5 * s2) / s2
    prod = -2.0 * params.r / s2
    disc = math.sqrt(beta * beta - prod)
    if beta >= 0.0:
        m = -beta - disc
        n = prod / m
    else:
        n = -beta + disc
        m = prod / n
    # (n+1)(m+1)/(nmK) simplifies to (r + mu - sigma^2)/(rK)
    gamma1 = (params.r + params.mu - s2) / (params.r * params.K)
    gamma2 = 1.0 / params.K
    gamma = gamma1 if params.mu < s2 else gamma2
    return Roots(m=m, n=n, gamma1=gamma1, gamma2=gamma2, gamma=gamma)


def quadratic_residual(params: ModelParams, k: float) -> float:
    """Relative residual of the characteristic quadratic at ``k``.

    Normalised by the sum of the absolute values of its three terms.
    """
    s2 = params.sigma2
    t2 = 0.5 * s2 * k * k
    t1 = (params.mu - 0.5 * s2) * k
    t0 = -params.r
    return abs(t2 + t1 + t0) / (abs(t2) + abs(t1) + abs(t0))


class Violation(str, Enum):
    NONE = "none"
    M_PLUS_1_NONNEG = "m_plus_1_nonneg"
    N_PLUS_1_MINUS_P_NONPOS = "n_plus_1_minus_p_nonpos"
    BOUNDARY_EQUALITY = "boundary_equality"


class PRegime(str, Enum):
    P_BELOW_1 = "p_below_1"
    P_EQUAL_1 = "p_equal_1"
    P_ABOVE_1 = "p_above_1"


@dataclass(frozen=True)
class RegimeReport:
    assumption_a_holds: bool
    value_infinite: bool
    violated_condition: Violation
    p_regime: PRegime
    m_plus_1: float
    n_plus_1_minus_p: float
    r_plus_mu_gt_sigma2: bool
    mu_lt_r: bool

    def to_dict(self) -> dict:
        return {
            "assumption_a_holds": self.assumption_a_holds,
            "value_infinite": self.value_infinite,
            "violated_condition": self.violated_condition.value,
            "p_regime": self.p_regime.value,
            "m_plus_1": self.m_plus_1,
            "n_plus_1_minus_p": self.n_plus_1_minus_p,
            "r_plus_mu_gt_sigma2": self.r_plus_mu_gt_sigma2,
            "mu_lt_r": self.mu_lt_r,
        }


def _p_regime(p: float) -> PRegime:
    if abs(p - 1.0) <= _P_ONE_TOL:
        return PRegime.P_EQUAL_1
    return PRegime.P_BELOW_1 if p < 1.0 else PRegime.P_ABOVE_1


def classify_regime(params: ModelParams, roots: Roots | None = None) -> RegimeReport:
    """Finite-value gate: ``m + 1 < 0`` and ``n + 1 - p > 0``.

    A strict violation of either inequality means the value is infinite.
    Equality within :data:`EQUALITY_TOL` is reported separately; it is neither
    covered by the finiteness result nor by the divergence result.
    """
    if roots is None:
        roots = compute_roots(params)
    p = params.p
    mp1 = roots.m + 1.0
    np1p = roots.n + 1.0 - p
    if abs(mp1) <= EQUALITY_TOL or abs(np1p) <= EQUALITY_TOL:
        violation = Violation.BOUNDARY_EQUALITY
    elif mp1 > 0.0:
        violation = Violation.M_PLUS_1_NONNEG
    elif np1p < 0.0:
        violation = Violation.N_PLUS_1_MINUS_P_NONPOS
    else:
        violation = Violation.NONE
    holds = violation is Violation.NONE
    infinite = violation in (Violation.M_PLUS_1_NONNEG, Violation.N_PLUS_1_MINUS_P_NONPOS)
    r_mu = params.r + params.mu > params.sigma2
    if holds and not r_mu:
        raise AssertionError("m + 1 < 0 must imply r + mu > sigma^2")
    return RegimeReport(
        assumption_a_holds=holds,
        value_infinite=infinite,
        violated_condition=violation,
        p_regime=_p_regime(p),
        m_plus_1=mp1,
        n_plus_1_minus_p=np1p,
        r_plus_mu_gt_sigma2=r_mu,
        mu_lt_r=params.mu < params.r,
    )


@dataclass(frozen=True)
class PowerMap:
    """State map ``(x, s) -> (x**a, s**a)``."""

    a: float

    def __call__(self, x, s):
        if self.a == 1.0:
            return x, s
        return x**self.a, s**self.a


def normalize_exponents(params: ModelParams) -> Tuple[ModelParams, PowerMap]:
    """Rewrite a general ``(a, b)`` contract as an ``a = 1`` one.

    ``X**a`` is again a geometric Brownian motion with drift
    ``sigma^2 a (a - 1) / 2 + mu a`` and volatility ``sigma a``; the running
    maximum commutes with the power map, and the payoff exponent becomes
    ``p = b / a``.
    """
    a = params.a
    if a == 1.0:
        return params, PowerMap(1.0)
    mu = 0.5 * params.sigma2 * a * (a - 1.0) + params.mu * a
    sigma = params.sigma * a
    return ModelParams(mu=mu, sigma=sigma, r=params.r, K=params.K, a=1.0, b=params.p), PowerMap(a)


@dataclass(frozen=True)
class AssumptionANReport:
    """Finite-value gate for the ``(S^p - K X)^+`` problem.

    ``holds`` requires ``r_tilde > 0``, ``m_tilde + 1 < 0`` and
    ``n_tilde + 1 - p > 0``.  Given ``r_tilde > 0`` the middle condition is
    automatic because it is equivalent to ``r > 0``.
    """

    holds: bool
    mu_tilde: float
    r_tilde: float
    r_tilde_positive: bool
    m_tilde_plus_1: float | None
    n_tilde_plus_1_minus_p: float | None
    roots_tilde: Roots | None

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "mu_tilde": self.mu_tilde,
            "r_tilde": self.r_tilde,
            "r_tilde_positive": self.r_tilde_positive,
            "m_tilde_plus_1": self.m_tilde_plus_1,
            "n_tilde_plus_1_minus_p": self.n_tilde_plus_1_minus_p,
            "roots_tilde": None if self.roots_tilde is None else self.roots_tilde.to_dict(),
        }


def tilde_params(params: ModelParams) -> Tuple[ModelParams | None, AssumptionANReport]:
    """Measure-change parameters ``mu + sigma^2`` and ``r - mu``.

    Under the measure with density ``exp(sigma W_T - sigma^2 T / 2)`` the
    ``(S^p - K X)^+`` problem becomes ``x`` times the ``(S^p/X - K)^+``
    problem with these parameters.  Returns ``None`` for the parameters when
    ``r - mu <= 0``.
    """
    mu_t = params.mu + params.sigma2
    r_t = params.r - params.mu
    if r_t <= 0.0:
        return None, AssumptionANReport(
            holds=False,
            mu_tilde=mu_t,
            r_tilde=r_t,
            r_tilde_positive=False,
            m_tilde_plus_1=None,
            n_tilde_plus_1_minus_p=None,
            roots_tilde=None,
        )
    pt = replace(params, mu=mu_t, r=r_t)
    rt = compute_roots(pt)
    mp1 = rt.m + 1.0
    np1p = rt.n + 1.0 - pt.p
    holds = mp1 < -EQUALITY_TOL and np1p > EQUALITY_TOL and _p_regime(pt.p) is not PRegime.P_EQUAL_1
    return pt, AssumptionANReport(
        holds=holds,
        mu_tilde=mu_t,
        r_tilde=r_t,
        r_tilde_positive=True,
        m_tilde_plus_1=mp1,
        n_tilde_plus_1_minus_p=np1p,
        roots_tilde=rt,
    )


@dataclass(frozen=True)
class ReductionDescriptor:
    """Dynamics of the ``K = 0`` problem after the Russian-option reduction.

    The value satisfies ``upsilon(x, s) = x_t**prefactor_exponent * R(x_t, s_t)``
    with ``(x_t, s_t) = (x**b, s**b)``, where ``R`` is a perpetual Russian
    option value (discounted running maximum) for a GBM with ``drift`` and
    ``volatility`` discounted at ``discount``.
    """

    drift: float
    volatility: float
    discount: float
    prefactor_exponent: float
    state_exponent: float

    def state_map(self, x):
        return x**self.state_exponent

    def to_dict(self) -> dict:
        return {
            "drift": self.drift,
            "volatility": self.volatility,
            "discount": self.discount,
            "prefactor_exponent": self.prefactor_exponent,
            "state_exponent": self.state_exponent,
        }


def russian_reduction(
    params: ModelParams | None = None,
    *,
    mu: float | None = None,
    sigma: float | None = None,
    r: float | None = None,
    a: float | None = None,
    b: float | None = None,
) -> ReductionDescriptor:
    """Map the ``E[e^{-r tau} S^b / X^a]`` problem onto a Russian option.

    Fields come from ``params`` and are overridden by any keyword given;
    ``a = 0``, the classical Russian option, is only reachable through the
    keyword since :class:`ModelParams` requires ``a > 0``.  Only the mapping
    is provided, not a Russian option price.
    """
    base = params.to_dict() if params is not None else {}
    vals = {"mu": mu, "sigma": sigma, "r": r, "a": a, "b": b}
    for key, val in vals.items():
        if val is None:
            if key not in base:
                raise ValidationError(key, "required")
            val = base[key]
        vals[key] = _check_finite(key, val)
    mu, sigma, r, a, b = (vals[k] for k in ("mu", "sigma", "r", "a", "b"))
    if b <= 0.0:
        raise ValidationError("b", f"must be positive, got {b}")
    if a < 0.0:
        raise ValidationError("a", f"must be nonnegative, got {a}")
    s2 = sigma * sigma
    return ReductionDescriptor(
        drift=0.5 * s2 * b * (b - 1.0) + mu * b - s2 * a * b,
        volatility=sigma * b,
        discount=r + mu * a - 0.5 * s2 * a * (a + 1.0),
        prefactor_exponent=-a / b if a else 0.0,
        state_exponent=b,
    )
