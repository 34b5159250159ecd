"""Free-boundary separatrix ``H(s)`` of the watermark stopping problem.

``H`` solves ``H'(s) = calH(H, s)`` inside ``0 < H < min(Gamma s^p, s)``.
Solutions through a point ``(s_*, delta)`` either hit the upper edge of the
domain at a finite level (``s_*`` too small) or bend down and leave the
asymptotic band (``s_*`` too large); the free boundary is the single curve in
between.  ``s_*`` is located by shooting and bisection in the rescaled
coordinates ``h = H / s^p`` (``p < 1``) or ``h = H / s`` (``p > 1``), where the
curve converges to a constant ``c``.

Integration runs in ``(t, y) = (ln s, ln h)``.  In these coordinates the
separatrix is repelling forwards in ``t`` and attracting backwards, so the
stored grid is produced by a single backward sweep started near ``c`` far
beyond ``s_max``.  The sweep forgets its start before reaching ``s_max`` and
passes through the bisected anchor ``(s_*, delta)``, which serves as a
consistency check.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence

import numpy as np
from scipy.integrate import DOP853
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.optimize import brentq

from .errors import DomainError, RegimeError, SolverError
from .gbm_core import ModelParams, PRegime, Roots, classify_regime, compute_roots

__all__ = [
    "OdeDomain",
    "IntegratorConfig",
    "ShotOutcome",
    "ShotClassification",
    "FreeBoundary",
    "rhs_H",
    "rhs_h",
    "nullcline_s",
    "nullcline_h",
    "s_dagger",
    "asymptote_c",
    "default_delta",
    "shoot",
    "solve_separatrix",
    "eval_H",
    "boundary_csv",
    "boundary_descriptor",
    "boundary_curves",
]

# slope returned for states beyond a singular edge; forces step rejection
_BIG = 1e6


@dataclass(frozen=True)
class OdeDomain:
    """``0 < H < min(gamma * s**p, s)``."""

    gamma: float
    p: float

    def upper_envelope(self, s):
        return np.minimum(self.gamma * np.power(s, self.p), s)

    def upper_envelope_h(self, s):
        """The same edge in rescaled coordinates ``h``."""
        if self.p < 1.0:
            return np.minimum(self.gamma, np.power(s, 1.0 - self.p))
        return np.minimum(self.gamma * np.power(s, self.p - 1.0), 1.0)


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances for shots, sweeps and the shot classifier."""

    rtol: float = 1e-10
    atol: float = 1e-12
    sweep_rtol: float = 1e-13
    sweep_atol: float = 1e-15
    grid_step: float = 0.005
    band: float = 0.02
    hit_tol: float = 1e-9
    tol_c: float = 1e-3
    s_end_factor: float = 1e4
    s_cap_factor: float = 1e12
    backward_floor: float = 1e-6
    contraction: float = 36.0
    max_iter: int = 200


def _check_p(p: float) -> None:
    if abs(p - 1.0) <= 1e-12:
        raise RegimeError(
            "p = 1 is not covered by the separatrix construction; it reduces to the "
            "perpetual lookback option with floating strike"
        )


def _in_domain(H_bar, s, gamma: float, p: float):
    H_bar = np.asarray(H_bar, dtype=float)
    s = np.asarray(s, dtype=float)
    return (s > 0) & (H_bar > 0) & (H_bar < np.minimum(gamma * np.power(s, p), s))


def rhs_H(H_bar, s, roots: Roots, p: float, K: float, check: bool = True):
    """Slope ``calH(H_bar, s)`` of the free-boundary ODE.

    Evaluated as ``p s^(p-1) H [(m+1) - (n+1) e] / (D (1 - e))`` with
    ``e = (s/H)^(m-n)`` and ``D = (m+1)(n+1) s^p - n m K H``, which is the
    original quotient with ``(s/H)^n`` divided out.
    """
    H_bar = np.asarray(H_bar, dtype=float)
    s = np.asarray(s, dtype=float)
    if check and not np.all(_in_domain(H_bar, s, roots.gamma, p)):
        raise DomainError("(H_bar, s) outside 0 < H_bar < min(Gamma s^p, s)")
    m, n = roots.m, roots.n
    log_rho = np.log(s) - np.log(H_bar)
    e = np.exp((m - n) * log_rho)
    one_minus_e = -np.expm1((m - n) * log_rho)
    D = (m + 1.0) * (n + 1.0) * np.power(s, p) - n * m * K * H_bar
    out = p * np.power(s, p - 1.0) * H_bar * ((m + 1.0) - (n + 1.0) * e) / (D * one_minus_e)
    return out[()] if out.ndim == 0 else out


def _G_below(t: float, y: float, m: float, n: float, p: float, K: float) -> float:
    # p < 1: d ln h / d ln s, with h = H / s^p
    L = (n - m) * ((1.0 - p) * t - y)
    if L <= 0.0:
        return _BIG
    h = math.exp(y)
    D1 = (m + 1.0) * (n + 1.0) - n * m * K * h
    if D1 >= 0.0:
        return _BIG
    iq = math.exp(-L)
    num = -(n * (m + 1.0) - n * m * K * h) + (m * (n + 1.0) - n * m * K * h) * iq
    return p * num / (D1 * -math.expm1(-L))


def _G_above(t: float, y: float, m: float, n: float, p: float, K: float) -> float:
    # p > 1: d ln h / d ln s, with h = H / s; both terms divided by s^(p-1)
    L = -(n - m) * y
    if L <= 0.0:
        return _BIG
    h = math.exp(y)
    u = math.exp((1.0 - p) * t)
    D2 = (m + 1.0) * (n + 1.0) - n * m * K * h * u
    if D2 >= 0.0:
        return _BIG
    hq = math.exp(-L)
    num = (m + 1.0) * (p - 1.0 - n) - (n + 1.0) * (p - 1.0 - m) * hq
    return num / (-math.expm1(-L) * D2) + n * m * K * h * u / D2


def _G(t, y, roots: Roots, p, K):
    return (_G_below if p < 1.0 else _G_above)(t, y, roots.m, roots.n, p, K)


def rhs_h(h_bar, s, roots: Roots, p: float, K: float, check: bool = True):
    """Slope of the rescaled boundary ``h = H/s^p`` (p < 1) or ``h = H/s`` (p > 1).

    Implements the closed forms of the rescaled ODE directly; by the chain
    rule it equals ``s^-p calH - p h / s`` resp. ``calH / s - h / s``.
    """
    _check_p(p)
    h_bar = np.asarray(h_bar, dtype=float)
    s = np.asarray(s, dtype=float)
    scale = np.power(s, p) if p < 1.0 else s
    if check and not np.all(_in_domain(h_bar * scale, s, roots.gamma, p)):
        raise DomainError("(h_bar, s) outside the rescaled domain")
    m, n = roots.m, roots.n
    nmK = n * m * K
    if p < 1.0:
        L = (n - m) * ((1.0 - p) * np.log(s) - np.log(h_bar))
        iq = np.exp(-L)
        D1 = (m + 1.0) * (n + 1.0) - nmK * h_bar
        num = -(n * (m + 1.0) - nmK * h_bar) + (m * (n + 1.0) - nmK * h_bar) * iq
        out = h_bar / s * p * num / (D1 * -np.expm1(-L))
    else:
        hq = np.power(h_bar, n - m)
        sp1 = np.power(s, p - 1.0)
        D2 = (m + 1.0) * (n + 1.0) * sp1 - nmK * h_bar
        A = (m + 1.0) * (p - 1.0 - n) - (n + 1.0) * (p - 1.0 - m) * hq
        out = h_bar / s * (sp1 * A / ((1.0 - hq) * D2) + nmK * h_bar / D2)
    return out[()] if out.ndim == 0 else out


def asymptote_c(roots: Roots, p: float, K: float) -> float:
    """Limit of ``H(s)/s^p`` (p < 1) or ``H(s)/s`` (p > 1) as ``s -> inf``."""
    _check_p(p)
    m, n = roots.m, roots.n
    if p < 1.0:
        c = (m + 1.0) / (m * K)
        if not 0.0 < c < roots.gamma:
            raise RegimeError(f"asymptote c={c} outside ]0, Gamma[; check m + 1 < 0")
        return c
    ratio = (m + 1.0) * (p - n - 1.0) / ((n + 1.0) * (p - m - 1.0))
    if ratio <= 0.0:
        raise RegimeError("asymptote undefined; check n + 1 - p > 0")
    c = ratio ** (1.0 / (n - m))
    if not 0.0 < c < 1.0:
        raise RegimeError(f"asymptote c={c} outside ]0, 1[")
    return c


def nullcline_s(h_bar, roots: Roots, p: float, K: float):
    """Level ``s`` at which the rescaled slope vanishes, as a function of ``h``.

    Strictly increasing on ``]0, c[`` from 0 to infinity.
    """
    c = asymptote_c(roots, p, K)
    h_bar = np.asarray(h_bar, dtype=float)
    if np.any((h_bar <= 0.0) | (h_bar >= c)):
        raise DomainError(f"h_bar must lie in ]0, {c}[")
    m, n = roots.m, roots.n
    nmK = n * m * K
    if p < 1.0:
        ratio = (m * (n + 1.0) - nmK * h_bar) / (n * (m + 1.0) - nmK * h_bar)
        out = (ratio ** (1.0 / (n - m)) * h_bar) ** (1.0 / (1.0 - p))
    else:
        hq = np.power(h_bar, n - m)
        den = (m + 1.0) * (p - 1.0 - n) - (n + 1.0) * (p - 1.0 - m) * hq
        out = (-nmK * (1.0 - hq) * h_bar / den) ** (1.0 / (p - 1.0))
    return out[()] if out.ndim == 0 else out


def nullcline_h(s: float, roots: Roots, p: float, K: float) -> float:
    """Inverse of :func:`nullcline_s`."""
    c = asymptote_c(roots, p, K)
    lo, hi = math.log(c) - 60.0, math.log(c)
    f = lambda y: math.log(nullcline_s(math.exp(y), roots, p, K)) - math.log(s)
    # nullcline_s blows up at c; back off until finite and above s
    y_hi = hi - 1e-15
    while not math.isfinite(f(y_hi)):
        y_hi -= 1e-12
    return math.exp(brentq(f, lo, y_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def s_dagger(delta: float, domain: OdeDomain) -> float:
    """Unique ``s`` with ``min(Gamma s^p, s) = delta``.

    Both branches of the envelope are increasing, so the solution is the larger
    of their individual inverses ``delta`` and ``(delta / Gamma)^(1/p)``.
    """
    if delta <= 0.0:
        raise DomainError("delta must be positive")
    return max(delta, (delta / domain.gamma) ** (1.0 / domain.p))


def default_delta(roots: Roots, p: float) -> float:
    if p < 1.0:
        return 0.5 * min(roots.gamma, 1.0) ** (1.0 / (1.0 - p))
    return 0.5


class ShotOutcome(str, Enum):
    HIT_UPPER_BOUNDARY = "hit_upper_boundary"
    FELL_BELOW_SEPARATRIX_BAND = "fell_below_separatrix_band"
    CONVERGED_TO_ASYMPTOTE = "converged_to_asymptote"


@dataclass
class ShotClassification:
    """Result of one forward shot from ``(s_*, delta)``.

    ``s_hat`` is set for shots that reach the upper edge; ``s_peak`` is the
    level where ``h`` attained its maximum for shots that turn down.
    ``t`` and ``y`` hold the accepted steps in ``(ln s, ln h)``.
    """

    outcome: ShotOutcome
    terminal_s: float
    s_star: float
    s_hat: float | None = None
    s_peak: float | None = None
    t: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    y: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @property
    def s(self) -> np.ndarray:
        return np.exp(self.t)

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.y)


def shoot(
    s_star: float,
    delta: float,
    roots: Roots,
    p: float,
    K: float,
    cfg: IntegratorConfig | None = None,
    keep_path: bool = True,
) -> ShotClassification:
    """Integrate forward from ``H(s_*) = delta`` and classify the trajectory."""
    _check_p(p)
    cfg = cfg or IntegratorConfig()
    dom = OdeDomain(roots.gamma, p)
    c = asymptote_c(roots, p, K)
    if s_star <= s_dagger(delta, dom):
        raise DomainError("s_star must exceed s_dagger(delta)")
    q = p if p < 1.0 else 1.0
    t0 = math.log(s_star)
    y0 = math.log(delta) - q * t0
    t_end = t0 + math.log(cfg.s_end_factor)
    t_cap = t0 + math.log(cfg.s_cap_factor)
    m, n = roots.m, roots.n
    G = _G_below if p < 1.0 else _G_above
    fun = lambda t, y: np.array([G(t, y[0], m, n, p, K)])
    solver = DOP853(fun, t0, np.array([y0]), t_cap, rtol=cfg.rtol, atol=cfg.atol)
    ts: List[float] = [t0]
    ys: List[float] = [y0]
    low_h = c * (1.0 - cfg.band)
    y_max, t_peak, past_peak = y0, t0, False

    def finish(outcome, t, **kw):
        return ShotClassification(
            outcome=outcome,
            terminal_s=math.exp(t),
            s_star=s_star,
            t=np.array(ts) if keep_path else np.empty(0),
            y=np.array(ys) if keep_path else np.empty(0),
            **kw,
        )

    while True:
        msg = solver.step()
        t, y = solver.t, float(solver.y[0])
        s = math.exp(t)
        h = math.exp(y)
        env = float(dom.upper_envelope_h(s))
        if solver.status == "failed":
            if env - h < 1e-6 * env:
                return finish(ShotOutcome.HIT_UPPER_BOUNDARY, t, s_hat=s)
            raise SolverError(f"integrator failed at s={s:.6g}: {msg}", {"s": s, "h": h, "s_star": s_star})
        ts.append(t)
        ys.append(y)
        if env - h < cfg.hit_tol:
            return finish(ShotOutcome.HIT_UPPER_BOUNDARY, t, s_hat=s)
        if y > y_max:
            y_max, t_peak = y, t
        elif G(t, y, m, n, p, K) < 0.0:
            past_peak = True
        if past_peak and h < low_h:
            return finish(ShotOutcome.FELL_BELOW_SEPARATRIX_BAND, t, s_peak=math.exp(t_peak))
        if t >= t_end and abs(h - c) < cfg.tol_c:
            return finish(ShotOutcome.CONVERGED_TO_ASYMPTOTE, t)
        if solver.status == "finished":
            raise SolverError(
                f"shot from s_star={s_star:.6g} unclassified at s={s:.6g}",
                {"s": s, "h": h, "c": c, "s_star": s_star},
            )


@dataclass(frozen=True)
class FreeBoundary:
    """Solved free boundary on a grid of integrator steps.

    ``s`` and ``H`` are strictly increasing; ``slope`` holds
    ``d ln H / d ln s`` at the nodes, which the interpolant uses as exact
    Hermite data.  ``H(0+) = 0`` is implied and not stored as a node.
    """

    regime: PRegime
    c: float
    delta: float
    s_star: float
    s_dagger: float
    bracket_width: float
    s: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    slope: np.ndarray = field(repr=False)
    gamma: float = 1.0
    p: float = 0.5
    K: float = 1.0
    anchor_mismatch: float = 0.0
    n_shots: int = 0
    diagnostics: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        x = np.log(self.s)
        yv = np.log(self.H)
        interp = CubicHermiteSpline(x, yv, self.slope)
        if not _hermite_monotone(x, yv, self.slope):
            interp = PchipInterpolator(x, yv)
        object.__setattr__(self, "_interp", interp)

    @property
    def s_min(self) -> float:
        return float(self.s[0])

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    @property
    def h(self) -> np.ndarray:
        return self.H / self.s ** (self.p if self.p < 1.0 else 1.0)

    @property
    def grid_size(self) -> int:
        return int(self.s.size)

    def __call__(self, s):
        return eval_H(self, s)


def _hermite_monotone(x, y, d) -> bool:
    dx = np.diff(x)
    dy = np.diff(y)
    if np.any(dy <= 0) or np.any(d <= 0):
        return False
    sec = dy / dx
    a = d[:-1] / sec
    b = d[1:] / sec
    return bool(np.all(a * a + b * b <= 9.0))


def _sweep_backward(t0, y0, t_stop, roots, p, K, cfg, max_step, y_stop=None):
    """Backward integration in ``(ln s, ln h)``; returns accepted steps in order of decreasing t."""
    m, n = roots.m, roots.n
    G = _G_below if p < 1.0 else _G_above
    fun = lambda t, y: np.array([G(t, y[0], m, n, p, K)])
    solver = DOP853(fun, t0, np.array([y0]), t_stop, rtol=cfg.sweep_rtol, atol=cfg.sweep_atol, max_step=max_step)
    q = p if p < 1.0 else 1.0
    ts, ys = [t0], [y0]
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise SolverError(f"backward sweep failed at s={math.exp(solver.t):.6g}: {msg}")
        ts.append(solver.t)
        ys.append(float(solver.y[0]))
        # stop once H = h s^q falls below the floor
        if y_stop is not None and ys[-1] + q * ts[-1] < y_stop:
            break
    return np.array(ts), np.array(ys)


def _growth_rate(c: float, t: float, roots: Roots, p: float, K: float) -> float:
    # linearised repulsion rate of the rescaled flow at y = ln c
    G = _G_below if p < 1.0 else _G_above
    eps = 1e-6
    y = math.log(c)
    d = (G(t, y + eps, roots.m, roots.n, p, K) - G(t, y - eps, roots.m, roots.n, p, K)) / (2 * eps)
    return d


def solve_separatrix(
    params: ModelParams,
    roots: Roots | None = None,
    delta: float | None = None,
    tol: float = 1e-12,
    cfg: IntegratorConfig | None = None,
) -> FreeBoundary:
    """Locate the free boundary through level ``delta`` and tabulate it.

    Parameters
    ----------
    params : ModelParams
        Normalised parameters (``a = 1``); ``p = b``.
    delta : float, optional
        Anchor level; defaults to a value that puts ``s_dagger`` near 1.
    tol : float
        Relative bracket width at which bisection on ``s_*`` stops.
    """
    cfg = cfg or IntegratorConfig()
    if params.a != 1.0:
        raise RegimeError("solve_separatrix expects normalised parameters (a = 1)")
    roots = roots or compute_roots(params)
    report = classify_regime(params, roots)
    p, K = params.p, params.K
    _check_p(p)
    if not report.assumption_a_holds:
        raise RegimeError(f"finite-value condition fails: {report.violated_condition.value}")
    c = asymptote_c(roots, p, K)
    dom = OdeDomain(roots.gamma, p)
    delta = default_delta(roots, p) if delta is None else float(delta)
    s_dag = s_dagger(delta, dom)
    history: List[tuple] = []

    def run(s_star):
        shot = shoot(s_star, delta, roots, p, K, cfg, keep_path=False)
        history.append((s_star, shot.outcome.value, shot.terminal_s))
        if len(history) > cfg.max_iter:
            raise SolverError("iteration budget exhausted", {"history": history})
        return shot

    lo = s_dag * (1.0 + 1e-6)
    shot = run(lo)
    converged = shot if shot.outcome is ShotOutcome.CONVERGED_TO_ASYMPTOTE else None
    if shot.outcome is ShotOutcome.FELL_BELOW_SEPARATRIX_BAND:
        raise SolverError("shot next to s_dagger already falls below the band", {"history": history})
    hi = 2.0 * lo
    while converged is None:
        shot = run(hi)
        if shot.outcome is ShotOutcome.HIT_UPPER_BOUNDARY:
            lo, hi = hi, 2.0 * hi
        elif shot.outcome is ShotOutcome.CONVERGED_TO_ASYMPTOTE:
            converged = shot
        else:
            break
    while converged is None and hi - lo > tol * lo:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        shot = run(mid)
        if shot.outcome is ShotOutcome.HIT_UPPER_BOUNDARY:
            lo = mid
        elif shot.outcome is ShotOutcome.FELL_BELOW_SEPARATRIX_BAND:
            hi = mid
        else:
            converged = shot
    if converged is not None:
        s_star = converged.s_star
        width = 0.0 if hi <= lo else hi - lo
    else:
        s_star = 0.5 * (lo + hi)
        width = hi - lo

    q = p if p < 1.0 else 1.0
    t_star = math.log(s_star)
    y_star = math.log(delta) - q * t_star

    # The grid is one backward sweep started far beyond s_max, where any start
    # near c has been forgotten by the time the sweep reaches s_max.  The
    # shooting anchor is then checked against it.
    t_max = t_star + math.log(cfg.s_end_factor)
    far = None
    for _ in range(6):
        rate = _growth_rate(c, t_max, roots, p, K)
        if rate <= 0.0:
            raise SolverError("asymptote is not repelling; cannot sweep from the far field")
        t_far = t_max + cfg.contraction / rate
        t_a, y_a = _sweep_backward(t_far, math.log(c), t_max, roots, p, K, cfg, np.inf)
        if abs(math.exp(y_a[-1]) - c) < cfg.tol_c:
            far = (t_far, y_a[-1], rate)
            break
        t_max += math.log(100.0)
    if far is None:
        raise SolverError("far-field sweep never came within tol_c of the asymptote", {"history": history})
    y_floor = math.log(cfg.backward_floor * delta)
    t_sw, y_sw = _sweep_backward(t_max, far[1], t_max - 400.0, roots, p, K, cfg, cfg.grid_step, y_stop=y_floor)
    if t_sw[-1] > t_star:
        raise SolverError("backward sweep stopped above the anchor")
    t_all = t_sw[::-1]
    y_all = y_sw[::-1]
    G = _G_below if p < 1.0 else _G_above
    slope = np.array([G(t, y, roots.m, roots.n, p, K) for t, y in zip(t_all, y_all)]) + q
    s_grid = np.exp(t_all)
    H_grid = np.exp(y_all + q * t_all)
    keep = np.concatenate([[True], np.diff(t_all) > 0])
    fb = FreeBoundary(
        regime=report.p_regime,
        c=c,
        delta=delta,
        s_star=s_star,
        s_dagger=s_dag,
        bracket_width=width,
        s=s_grid[keep],
        H=H_grid[keep],
        slope=slope[keep],
        gamma=roots.gamma,
        p=p,
        K=K,
        anchor_mismatch=0.0,
        n_shots=len(history),
        diagnostics={
            "history": history,
            "bracket": (lo, hi),
            "far_field_s": math.exp(far[0]),
            "repulsion_rate": far[2],
            "below_s_min_rule": "power-law extrapolation through the first two nodes",
        },
    )
    mismatch = abs(float(eval_H(fb, s_star)) / delta - 1.0)
    object.__setattr__(fb, "anchor_mismatch", mismatch)
    return fb


def eval_H(fb: FreeBoundary, s):
    """Free boundary at arbitrary ``s > 0``.

    Cubic Hermite interpolation in ``(ln s, ln H)`` on the grid; ``c s^p``
    (resp. ``c s``) above the grid; a power law through the first two nodes
    below it, clamped under the domain edge.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0) or not np.all(np.isfinite(s_arr)):
        raise DomainError("eval_H needs s > 0")
    x = np.log(s_arr)
    out = np.empty_like(x)
    lo = s_arr < fb.s[0]
    hi = s_arr > fb.s[-1]
    mid = ~(lo | hi)
    if np.any(mid):
        out[mid] = np.exp(fb._interp(x[mid]))
        # exact node values
        idx = np.searchsorted(fb.s, s_arr[mid])
        idx = np.clip(idx, 0, fb.s.size - 1)
        exact = fb.s[idx] == s_arr[mid]
        vals = out[mid]
        vals[exact] = fb.H[idx[exact]]
        out[mid] = vals
    if np.any(hi):
        q = fb.p if fb.p < 1.0 else 1.0
        out[hi] = fb.c * s_arr[hi] ** q
    if np.any(lo):
        k = math.log(fb.H[1] / fb.H[0]) / math.log(fb.s[1] / fb.s[0])
        val = fb.H[0] * (s_arr[lo] / fb.s[0]) ** k
        env = np.minimum(fb.gamma * s_arr[lo] ** fb.p, s_arr[lo])
        out[lo] = np.minimum(val, env * (1.0 - 1e-12))
    return out[()] if out.ndim == 0 else out


def boundary_csv(fb: FreeBoundary, out=None) -> str:
    """``s,H`` rows in increasing ``s`` with 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "H"])
    for s, H in zip(fb.s, fb.H):
        w.writerow([f"{s:.17g}", f"{H:.17g}"])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text


def boundary_descriptor(fb: FreeBoundary) -> dict:
    return {
        "regime": fb.regime.value,
        "c": fb.c,
        "delta": fb.delta,
        "s_star": fb.s_star,
        "bracket_width": fb.bracket_width,
        "grid_size": fb.grid_size,
    }


def boundary_curves(fb: FreeBoundary, roots: Roots, s: Sequence[float] | None = None) -> str:
    """Multi-column CSV of the boundary against the domain edges and asymptote.

    Columns: ``s, H, envelope, gamma_s_p, diagonal, asymptote, nullcline_H``.
    The nullcline column is ``s^q * nullcline_h(s)`` and is empty where the
    root search does not bracket.
    """
    if s is None:
        s = np.exp(np.linspace(math.log(fb.s_min), math.log(fb.s_max), 400))
    s = np.asarray(s, dtype=float)
    q = fb.p if fb.p < 1.0 else 1.0
    H = eval_H(fb, s)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "H", "envelope", "gamma_s_p", "diagonal", "asymptote", "nullcline_H"])
    for si, Hi in zip(s, H):
        try:
            nc = f"{si**q * nullcline_h(si, roots, fb.p, fb.K):.17g}"
        except (ValueError, DomainError):
            nc = ""
        w.writerow(
            [
                f"{si:.17g}",
                f"{Hi:.17g}",
                f"{min(fb.gamma * si**fb.p, si):.17g}",
                f"{fb.gamma * si**fb.p:.17g}",
                f"{si:.17g}",
                f"{fb.c * si**q:.17g}",
                nc,
            ]
        )
    return buf.getvalue()


def descriptor_json(fb: FreeBoundary) -> str:
    return json.dumps(boundary_descriptor(fb), indent=2)
