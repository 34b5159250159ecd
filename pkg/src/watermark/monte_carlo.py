"""Monte Carlo oracle: simulate ``(X, S)`` and stop at a supplied boundary.

Paths use exact log-normal steps.  Each path draws from its own generator,
seeded from the master seed through :class:`numpy.random.SeedSequence`, so
results do not depend on the number of worker threads and runs with the same
seed share their random numbers path by path.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Sequence

import numpy as np
from numba import njit

from .errors import McMisuseError, ValidationError
from .free_boundary import FreeBoundary, eval_H
from .gbm_core import ModelParams, classify_regime

__all__ = [
    "McConfig",
    "McEstimate",
    "GrowthTable",
    "simulate_value",
    "perturbation_test",
    "divergence_probe",
    "worker_count",
]

V_PAYOFF = "v_payoff"
U_PAYOFF = "u_payoff"
_PAYOFF_CODES = {V_PAYOFF: 0, U_PAYOFF: 1, "v": 0, "u": 1}


def worker_count() -> int:
    """Worker threads for path simulation; ``WATERMARK_THREADS`` caps it."""
    n = os.cpu_count() or 1
    env = os.environ.get("WATERMARK_THREADS")
    if env:
        try:
            n = min(n, int(env))
        except ValueError:
            raise ValidationError("WATERMARK_THREADS", f"expected an integer, got {env!r}") from None
    return max(1, n)


@dataclass(frozen=True)
class McConfig:
    """Simulation settings; ``t_max`` defaults to ``50 / r`` when left as None."""

    n_paths: int = 100_000
    dt: float = 1e-3
    t_max: float | None = None
    seed: int = 20240601
    bridge_correction: bool = True

    def __post_init__(self) -> None:
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValidationError("n_paths", f"must be a positive integer, got {self.n_paths}")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValidationError("dt", f"must be positive, got {self.dt}")
        if self.t_max is not None and not self.t_max >= self.dt:
            raise ValidationError("t_max", f"must be at least dt, got {self.t_max}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed", "must fit in 64 unsigned bits")

    def horizon(self, r: float) -> float:
        return 50.0 / r if self.t_max is None else float(self.t_max)


@dataclass(frozen=True)
class McEstimate:
    """Discounted-payoff estimate under one stopping boundary.

    ``truncation_mass`` bounds the discounted contribution lost on paths
    still running at ``t_max``; it is NaN when no bound was supplied.
    """

    mean: float
    std_err: float
    n_paths: int
    n_stopped: int
    n_truncated: int
    truncation_mass: float
    degenerate: bool
    dt: float
    t_max: float
    seed: int

    @property
    def truncation_fraction(self) -> float:
        return self.n_truncated / self.n_paths

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_err": self.std_err,
            "n_paths": self.n_paths,
            "n_stopped": self.n_stopped,
            "n_truncated": self.n_truncated,
            "dt": self.dt,
            "t_max": self.t_max,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@njit(cache=True, inline="always")
def _threshold(ls, lg0, dlg, lh, lo_slope, hi_slope):
    # log H at log s from a uniform log-log table, linear outside it
    k = (ls - lg0) / dlg
    n = lh.size
    if k <= 0.0:
        return lh[0] + lo_slope * (ls - lg0)
    if k >= n - 1:
        return lh[n - 1] + hi_slope * (ls - (lg0 + (n - 1) * dlg))
    i = int(k)
    f = k - i
    return lh[i] + f * (lh[i + 1] - lh[i])


_SKIP_EXP = 40.0
_SKIP_U = math.exp(-_SKIP_EXP)


@njit(cache=True, nogil=True)
def _path(gen, lx, ls, mdt, sdt, two_var, n_steps, dt, bridge, lg0, dlg, lh, lo_slope, hi_slope, p, K, r, payoff):
    """One path; returns (discounted payoff, stopped, log x at exit, log s at exit)."""
    thr = _threshold(ls, lg0, dlg, lh, lo_slope, hi_slope)
    skip_scale = 4.0 / two_var
    for k in range(n_steps):
        lx1 = lx + mdt + sdt * gen.standard_normal()
        if bridge:
            # the bridge maximum exceeds ls iff -ln(1-u) > e, so the log is
            # only needed when e is small or u is extreme
            u = gen.random()
            e = (ls - lx) * (ls - lx1) * skip_scale
            if e < _SKIP_EXP or 1.0 - u < _SKIP_U:
                d = lx1 - lx
                top = 0.5 * (lx + lx1 + math.sqrt(d * d - two_var * math.log(1.0 - u)))
            else:
                top = lx1
        else:
            top = lx1
        lx = lx1
        if top > ls:
            ls = top
            thr = _threshold(ls, lg0, dlg, lh, lo_slope, hi_slope)
        if lx <= thr:
            t = (k + 1) * dt
            if payoff == 0:
                g = math.exp(p * ls - lx) - K
            else:
                g = math.exp(p * ls) - K * math.exp(lx)
            return math.exp(-r * t) * max(g, 0.0), True, lx, ls
    return 0.0, False, lx, ls


def _generators(seed: int, n: int):
    for child in np.random.SeedSequence(int(seed)).spawn(n):
        yield np.random.Generator(np.random.SFC64(child))


def _run(seed, n, lx0, ls0, drift, vol, dt, n_steps, bridge, lg0, dlg, lh, lo_slope, hi_slope, p, K, r, payoff):
    pay = np.zeros(n)
    stopped = np.zeros(n, dtype=bool)
    xT = np.empty(n)
    sT = np.empty(n)
    mdt = drift * dt
    sdt = vol * math.sqrt(dt)
    two_var = 2.0 * vol * vol * dt
    args = (mdt, sdt, two_var, n_steps, dt, bridge, lg0, dlg, lh, lo_slope, hi_slope, p, K, r, payoff)
    gens = list(_generators(seed, n))

    def work(lo, hi):
        for j in range(lo, hi):
            pay[j], stopped[j], xT[j], sT[j] = _path(gens[j], lx0, ls0, *args)

    n_threads = worker_count()
    if n_threads == 1 or n < 2 * n_threads:
        work(0, n)
    else:
        edges = np.linspace(0, n, n_threads + 1).astype(int)
        with ThreadPoolExecutor(n_threads) as ex:
            list(ex.map(work, edges[:-1], edges[1:]))
    return pay, stopped, xT, sT


def _tabulate(boundary_fn: Callable, s0: float, span: float, n: int = 20001):
    lg = np.linspace(math.log(s0), math.log(s0) + span, n)
    sg = np.exp(lg)
    if isinstance(boundary_fn, FreeBoundary):
        H = eval_H(boundary_fn, sg)
    else:
        H = np.asarray(boundary_fn(sg), dtype=float)
        if H.shape != sg.shape:
            H = np.array([float(boundary_fn(v)) for v in sg])
    if np.any(~np.isfinite(H)):
        raise ValidationError("boundary_fn", "must return finite values")
    pos = H > 0.0
    # a boundary at or below zero never stops; represent it by a very low level
    lh = np.where(pos, np.log(np.where(pos, H, 1.0)), -1e300)
    if np.any(np.diff(lh) < 0.0):
        raise ValidationError("boundary_fn", "must be nondecreasing")
    dlg = lg[1] - lg[0]
    hi_slope = (lh[-1] - lh[-2]) / dlg if pos[-2] else 0.0
    return lg[0], dlg, lh, hi_slope


def _payoff(code: int, x: float, s: float, p: float, K: float) -> float:
    g = s**p / x - K if code == 0 else s**p - K * x
    return max(g, 0.0)


def simulate_value(
    params: ModelParams,
    boundary_fn: Callable,
    payoff: str = V_PAYOFF,
    x0: float = 1.0,
    s0: float = 1.0,
    cfg: McConfig | None = None,
    value_bound: Callable | None = None,
) -> McEstimate:
    """Estimate ``E[e^{-r tau} payoff]`` for the first time ``X <= boundary_fn(S)``.

    Parameters
    ----------
    params : ModelParams
        Normalised parameters (``a = 1``).
    boundary_fn : callable or FreeBoundary
        Increasing stopping level as a function of the running maximum.
    payoff : {"v_payoff", "u_payoff"}
        ``(S^p/X - K)^+`` or ``(S^p - K X)^+``, both discounted at ``r``.
    value_bound : callable, optional
        Upper bound ``(x, s) -> value`` for what a path still running at
        ``t_max`` could still collect; sets ``truncation_mass``.
    """
    cfg = cfg or McConfig()
    if payoff not in _PAYOFF_CODES:
        raise ValidationError("payoff", f"expected one of {V_PAYOFF!r}, {U_PAYOFF!r}")
    if not (0.0 < x0 <= s0):
        raise ValidationError("x0", "need 0 < x0 <= s0")
    if params.a != 1.0:
        raise ValidationError("a", "simulate the normalised problem (a = 1)")
    code = _PAYOFF_CODES[payoff]
    p, K, r = params.p, params.K, params.r
    t_max = cfg.horizon(r)
    n = int(cfg.n_paths)

    b0 = float(boundary_fn(s0)) if not isinstance(boundary_fn, FreeBoundary) else float(eval_H(boundary_fn, s0))
    if x0 <= b0:
        g = _payoff(code, x0, s0, p, K)
        return McEstimate(g, 0.0, n, n, 0, 0.0, False, cfg.dt, t_max, int(cfg.seed))

    n_steps = int(round(t_max / cfg.dt))
    drift = params.mu - 0.5 * params.sigma2
    vol = abs(params.sigma)
    span = abs(drift) * t_max + 10.0 * vol * math.sqrt(t_max) + 1.0
    lg0, dlg, lh, hi_slope = _tabulate(boundary_fn, s0, span)
    pay, stopped, xT, sT = _run(
        cfg.seed, n, math.log(x0), math.log(s0), drift, vol, cfg.dt, n_steps,
        bool(cfg.bridge_correction), lg0, dlg, lh, 0.0, hi_slope, p, K, r, code,
    )
    mean = float(np.mean(pay))
    std_err = float(np.std(pay, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    n_stop = int(stopped.sum())
    n_trunc = n - n_stop
    if value_bound is None:
        mass = math.nan
    elif n_trunc == 0:
        mass = 0.0
    else:
        xs, ss = np.exp(xT[~stopped]), np.exp(sT[~stopped])
        bound = np.maximum(np.asarray(value_bound(xs, ss), dtype=float), 0.0)
        mass = float(math.exp(-r * n_steps * cfg.dt) * bound.sum() / n)
    return McEstimate(
        mean=mean,
        std_err=std_err,
        n_paths=n,
        n_stopped=n_stop,
        n_truncated=n_trunc,
        truncation_mass=mass,
        degenerate=n_trunc > 0.5 * n,
        dt=cfg.dt,
        t_max=t_max,
        seed=int(cfg.seed),
    )


def perturbation_test(
    params: ModelParams,
    fb: FreeBoundary,
    thetas: Sequence[float] = (0.7, 0.85, 1.0, 1.15, 1.3),
    x0: float = 1.0,
    s0: float = 1.0,
    cfg: McConfig | None = None,
    payoff: str = V_PAYOFF,
) -> Dict[float, McEstimate]:
    """Estimates under the scaled boundaries ``theta * H`` with common random numbers."""
    if not any(abs(t - 1.0) < 1e-15 for t in thetas):
        raise ValidationError("thetas", "must include 1.0")
    out: Dict[float, McEstimate] = {}
    for theta in thetas:
        fn = lambda s, th=float(theta): th * eval_H(fb, s)
        out[float(theta)] = simulate_value(params, fn, payoff, x0, s0, cfg)
    return out


def _sample_at(seed, n, lx0, ls0, drift, vol, times, p, K, r):
    # exact joint draws of (X, S) at the horizons
    rng = np.random.Generator(np.random.SFC64(np.random.SeedSequence(int(seed))))
    lx = np.full(n, lx0)
    ls = np.full(n, ls0)
    out = np.empty((n, times.size))
    t_prev = 0.0
    for i, t in enumerate(times):
        dt = t - t_prev
        lx1 = lx + drift * dt + vol * math.sqrt(dt) * rng.standard_normal(n)
        d = lx1 - lx
        top = 0.5 * (lx + lx1 + np.sqrt(d * d - 2.0 * vol * vol * dt * np.log1p(-rng.random(n))))
        ls = np.maximum(ls, top)
        lx = lx1
        out[:, i] = math.exp(-r * t) * np.maximum(np.exp(p * ls - lx) - K, 0.0)
        t_prev = t
    return out


@dataclass(frozen=True)
class GrowthTable:
    """Fixed-horizon discounted payoffs and their fitted exponential rate."""

    horizons: tuple
    estimates: tuple
    std_errs: tuple
    fitted_rate: float
    predicted_rate: float
    monotone: bool

    def to_dict(self) -> dict:
        return asdict(self)


def divergence_probe(
    params: ModelParams,
    x0: float = 1.0,
    s0: float = 1.0,
    horizons: Sequence[float] = (5.0, 10.0, 20.0, 40.0),
    n_paths: int = 100_000,
    seed: int = 20240601,
) -> GrowthTable:
    """Evidence that the value is infinite: ``E[e^{-rt}(S_t^p/X_t - K)^+]`` at fixed ``t``.

    ``(X, S)`` is sampled exactly at the horizons: the log-price step is
    Gaussian and the maximum in between is drawn from the Brownian-bridge
    maximum law.  The predicted rate is ``sigma^2/2 - (mu - sigma^2/2) - r``
    when ``m + 1 > 0`` and ``sigma^2 (p-1)^2 / 2 + (mu - sigma^2/2)(p-1) - r``
    when ``p - 1 > n``.
    """
    report = classify_regime(params)
    if not report.value_infinite:
        raise McMisuseError(
            "divergence_probe needs parameters that strictly violate the finite-value condition"
        )
    if not (0.0 < x0 <= s0):
        raise ValidationError("x0", "need 0 < x0 <= s0")
    times = np.asarray(sorted(float(h) for h in horizons))
    if times.size < 2 or times[0] <= 0.0:
        raise ValidationError("horizons", "need at least two positive horizons")
    s2, mu, r, p = params.sigma2, params.mu, params.r, params.p
    drift = mu - 0.5 * s2
    if report.m_plus_1 > 0.0:
        rate = 0.5 * s2 - drift - r
    else:
        rate = 0.5 * s2 * (p - 1.0) ** 2 + drift * (p - 1.0) - r
    vals = _sample_at(seed, n_paths, math.log(x0), math.log(s0), drift, abs(params.sigma), times, p, params.K, r)
    est = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(n_paths)
    fitted = float(np.polyfit(times, np.log(est), 1)[0])
    return GrowthTable(
        horizons=tuple(times.tolist()),
        estimates=tuple(est.tolist()),
        std_errs=tuple(se.tolist()),
        fitted_rate=fitted,
        predicted_rate=float(rate),
        monotone=bool(np.all(np.diff(est) > 0.0)),
    )
