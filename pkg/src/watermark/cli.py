"""Command-line front end.

Exit codes: 0 success, 2 validation, 3 regime, 4 solver, 5 verification,
6 Monte Carlo misuse.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import numpy as np

from .errors import DomainError, McMisuseError, RegimeError, SolverError, ValidationError
from .free_boundary import (
    IntegratorConfig,
    boundary_csv,
    boundary_curves,
    boundary_descriptor,
    solve_separatrix,
)
from .gbm_core import ModelParams, classify_regime, compute_roots, normalize_exponents, tilde_params
from .monte_carlo import McConfig, divergence_probe, perturbation_test, simulate_value
from .value_function import (
    ValueSurface,
    build_surface,
    price_report,
    value_u,
    value_v,
    verify_vi,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_REGIME = 3
EXIT_SOLVER = 4
EXIT_VERIFY = 5
EXIT_MC_MISUSE = 6

P_ONE_NOTE = (
    "p = 1: the problem reduces to the perpetual lookback option with floating strike "
    "(state map x -> x^a, s -> s^a with b = a); no separatrix is solved"
)

# verification tolerances shared with the acceptance suite
VI_TOLERANCES = {
    "max_ode_residual_W": 1e-9,
    "min_obstacle_gap_W": -1e-9,
    "max_f_in_S": 1e-12,
    "smooth_fit_value_err": 1e-8,
    "smooth_fit_slope_err": 1e-8,
    "max_bc_err": 1e-4,
}

_PARAM_KEYS = ("mu", "sigma", "r", "K", "a", "b")
_CONFIG_KEYS = set(_PARAM_KEYS) | {
    "p", "delta", "tol", "out", "format", "x", "s", "variant", "curves", "seed",
    "paths", "dt", "tmax", "thetas", "bridge", "divergence", "horizons",
}


def _num(v: float) -> str:
    if math.isnan(v):
        return "null"
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    if v == int(v) and abs(v) < 2**53:
        return f"{v:.1f}" if abs(v) < 1e16 else f"{v:.17g}"
    return f"{v:.17g}"


def to_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{to_json(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _rows_csv(rows: List[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0].keys())
    w.writerow(keys)
    for row in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in (row[k] for k in keys)])
    return buf.getvalue()


@dataclass
class RunConfig:
    """Resolved command configuration."""

    params: ModelParams
    solver: IntegratorConfig = field(default_factory=IntegratorConfig)
    delta: float | None = None
    tol: float = 1e-12
    mc: McConfig = field(default_factory=McConfig)
    out: str | None = None
    format: str = "json"
    x: float = 1.0
    s: float = 1.0
    variant: str = "v"
    curves: bool = False
    thetas: List[float] | None = None
    divergence: bool = False
    horizons: List[float] = field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])


def _float_list(name: str, value) -> List[float]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ValidationError(name, f"expected a comma-separated list of numbers, got {value!r}") from None


def _load_config(path: str | None) -> Dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError("config", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config", "expected a flat JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown config field")
    return data


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    data = _load_config(ns.config)
    for key in _CONFIG_KEYS:
        val = getattr(ns, key, None)
        if val is not None:
            data[key] = val
    if "p" in data:
        if "b" in data and getattr(ns, "b", None) is not None:
            raise ValidationError("p", "give either p or b, not both")
        data["a"], data["b"] = data.get("a", 1.0), float(data["p"]) * float(data.get("a", 1.0))
    for key in ("mu", "sigma", "r"):
        if key not in data:
            raise ValidationError(key, "required")
    params = ModelParams(**{k: data[k] for k in _PARAM_KEYS if k in data})
    fmt = data.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ValidationError("format", f"expected json or csv, got {fmt!r}")
    out = data.get("out")
    if out is not None:
        os.makedirs(out, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ValidationError("out", f"{out} is not writable")
    variant = data.get("variant", "v")
    if variant not in ("v", "u", "v_hat", "u_hat"):
        raise ValidationError("variant", f"expected v, u, v_hat or u_hat, got {variant!r}")
    mc = McConfig(
        n_paths=int(data.get("paths", McConfig.n_paths)),
        dt=float(data.get("dt", McConfig.dt)),
        t_max=None if data.get("tmax") is None else float(data["tmax"]),
        seed=int(data.get("seed", McConfig.seed)),
        bridge_correction=bool(data.get("bridge", True)),
    )
    return RunConfig(
        params=params,
        delta=None if data.get("delta") is None else float(data["delta"]),
        tol=float(data.get("tol", 1e-12)),
        mc=mc,
        out=out,
        format=fmt,
        x=float(data.get("x", 1.0)),
        s=float(data.get("s", 1.0)),
        variant=variant,
        curves=bool(data.get("curves", False)),
        thetas=None if data.get("thetas") is None else _float_list("thetas", data["thetas"]),
        divergence=bool(data.get("divergence", False)),
        horizons=_float_list("horizons", data.get("horizons", [5.0, 10.0, 20.0, 40.0])),
    )


def _emit(cfg: RunConfig, payload: Dict[str, Any], name: str, stdout) -> None:
    text = to_json(payload) + "\n"
    stdout.write(text)
    if cfg.out:
        with open(os.path.join(cfg.out, f"{name}.json"), "w") as fh:
            fh.write(text)


def _surface(cfg: RunConfig, params: ModelParams | None = None):
    params = params or cfg.params
    if params.a != 1.0:
        params, _ = normalize_exponents(params)
    if classify_regime(params).p_regime.value == "p_equal_1":
        raise RegimeError(P_ONE_NOTE)
    if cfg.delta is None and cfg.tol == 1e-12:
        return build_surface(params)
    roots = compute_roots(params)
    fb = solve_separatrix(params, roots, delta=cfg.delta, tol=cfg.tol)
    return ValueSurface(params=params, roots=roots, boundary=fb)


def cmd_roots(cfg: RunConfig, stdout=sys.stdout) -> int:
    params = cfg.params
    norm, _ = normalize_exponents(params)
    roots = compute_roots(norm)
    report = classify_regime(norm, roots)
    pt, an = tilde_params(norm)
    payload = {
        "params": params.to_dict(),
        "normalized": norm.to_dict(),
        "p": norm.p,
        "roots": roots.to_dict(),
        "regime": report.to_dict(),
        "tilde": {"mu_tilde": an.mu_tilde, "r_tilde": an.r_tilde, "assumption": an.to_dict()},
    }
    if cfg.format == "csv":
        row = {"m": roots.m, "n": roots.n, "gamma1": roots.gamma1, "gamma2": roots.gamma2, "gamma": roots.gamma}
        row.update({k: v for k, v in report.to_dict().items()})
        stdout.write(_rows_csv([row]))
        return EXIT_OK
    _emit(cfg, payload, "roots", stdout)
    return EXIT_OK


def cmd_boundary(cfg: RunConfig, stdout=sys.stdout) -> int:
    surf = _surface(cfg)
    fb = surf.boundary
    desc = boundary_descriptor(fb)
    desc["anchor_mismatch"] = fb.anchor_mismatch
    desc["s_min"] = fb.s_min
    desc["s_max"] = fb.s_max
    desc["below_s_min_rule"] = fb.diagnostics["below_s_min_rule"]
    if cfg.out:
        boundary_csv(fb, os.path.join(cfg.out, "boundary.csv"))
        with open(os.path.join(cfg.out, "boundary.json"), "w") as fh:
            fh.write(to_json(desc) + "\n")
        if cfg.curves:
            with open(os.path.join(cfg.out, "curves.csv"), "w") as fh:
                fh.write(boundary_curves(fb, surf.roots))
    if cfg.format == "csv":
        stdout.write(boundary_curves(fb, surf.roots) if cfg.curves else boundary_csv(fb))
    else:
        stdout.write(to_json(desc) + "\n")
    return EXIT_OK


def _price(cfg: RunConfig) -> Dict[str, Any]:
    x, s = cfg.x, cfg.s
    if not (0.0 < x <= s):
        raise DomainError("need 0 < x <= s")
    params = cfg.params
    variant = cfg.variant
    if variant in ("v", "u") and params.a != 1.0:
        raise ValidationError("variant", "use v_hat or u_hat when a != 1")
    norm, pmap = normalize_exponents(params)
    xm, sm = (float(v) for v in pmap(x, s))
    if variant in ("u", "u_hat"):
        pt, an = tilde_params(norm)
        if not an.holds:
            raise RegimeError("finite-value condition for the (S^p - K X)^+ problem fails")
        surf = _surface(cfg, pt)
        value = float(value_u(xm, sm, norm))
    else:
        report = classify_regime(norm)
        if report.value_infinite:
            inf = value_v(xm, sm, norm)
            return {"x": x, "s": s, "value": math.inf, "region": None, "H_of_s": None,
                    "violated_condition": inf.violated_condition.value}
        surf = _surface(cfg, norm)
        value = float(value_v(xm, sm, surf))
    rep = price_report(xm, sm, surf, value)
    rep["x"], rep["s"] = x, s
    # boundary in the caller's coordinates
    rep["H_of_s"] = rep["H_of_s"] ** (1.0 / params.a)
    rep["variant"] = variant
    return rep


def cmd_price(cfg: RunConfig, stdout=sys.stdout) -> int:
    rep = _price(cfg)
    if cfg.format == "csv":
        stdout.write(_rows_csv([rep]))
    else:
        _emit(cfg, rep, "price", stdout)
    return EXIT_OK


def vi_failures(report, fb=None) -> List[str]:
    d = report.to_dict()
    bad = []
    for key, tol in VI_TOLERANCES.items():
        val = d[key]
        ok = val >= tol if key.startswith("min_") else val <= tol
        if not (ok and math.isfinite(val)):
            bad.append(key)
    if not report.growth_ok:
        bad.append("growth_ok")
    if not report.min_gxx_jump > 0.0:
        bad.append("min_gxx_jump")
    if fb is not None:
        q = fb.p if fb.p < 1.0 else 1.0
        env = np.minimum(fb.gamma * fb.s**fb.p, fb.s)
        if not (np.all(fb.H > 0) and np.all(fb.H < env) and np.all(np.diff(fb.H) > 0)):
            bad.append("boundary_containment")
        if not np.all(fb.H < fb.c * fb.s**q):
            bad.append("boundary_below_asymptote")
        if abs(fb.H[-1] / fb.s[-1] ** q - fb.c) >= 1e-3:
            bad.append("boundary_asymptote")
    return bad


def cmd_verify(cfg: RunConfig, stdout=sys.stdout) -> int:
    surf = _surface(cfg)
    report = verify_vi(surf)
    bad = vi_failures(report, surf.boundary)
    payload = {"report": report.to_dict(), "tolerances": VI_TOLERANCES, "failures": bad, "passed": not bad}
    _emit(cfg, payload, "verify", stdout)
    return EXIT_OK if not bad else EXIT_VERIFY


def cmd_mc(cfg: RunConfig, stdout=sys.stdout) -> int:
    params = cfg.params
    if params.a != 1.0:
        params, pmap = normalize_exponents(params)
        x, s = (float(v) for v in pmap(cfg.x, cfg.s))
    else:
        x, s = cfg.x, cfg.s
    if cfg.divergence:
        table = divergence_probe(params, x, s, cfg.horizons, cfg.mc.n_paths, cfg.mc.seed)
        _emit(cfg, {"divergence": table.to_dict()}, "mc", stdout)
        return EXIT_OK
    if cfg.variant in ("u", "u_hat"):
        pt, an = tilde_params(params)
        if not an.holds:
            raise RegimeError("finite-value condition for the (S^p - K X)^+ problem fails")
        surf = _surface(cfg, pt)
        payoff = "u_payoff"
        closed = float(value_u(x, s, params))
        bound = lambda xs, ss: value_u(xs, ss, params)
    else:
        surf = _surface(cfg, params)
        payoff = "v_payoff"
        closed = float(value_v(x, s, surf))
        bound = surf.w
    if cfg.thetas:
        ests = perturbation_test(params, surf.boundary, cfg.thetas, x, s, cfg.mc, payoff)
        rows = {f"{th:g}": e.to_dict() for th, e in ests.items()}
        best = max(ests, key=lambda th: ests[th].mean)
        payload = {"closed_form": closed, "estimates": rows, "argmax_theta": best}
        _emit(cfg, payload, "mc", stdout)
        return EXIT_OK
    est = simulate_value(params, surf.boundary, payoff, x, s, cfg.mc, value_bound=bound)
    agree = abs(est.mean - closed) <= 3.0 * est.std_err
    payload = {
        "estimate": est.to_dict(),
        "closed_form": closed,
        "z_score": (est.mean - closed) / est.std_err if est.std_err > 0 else 0.0,
        "truncation_fraction": est.truncation_fraction,
        "truncation_mass": est.truncation_mass,
        "agrees_within_3_std_err": agree,
    }
    _emit(cfg, payload, "mc", stdout)
    return EXIT_OK if agree else EXIT_VERIFY


COMMANDS = {"roots": cmd_roots, "boundary": cmd_boundary, "price": cmd_price, "verify": cmd_verify, "mc": cmd_mc}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    for key in ("mu", "sigma", "r", "K", "a", "b", "p"):
        g.add_argument(f"--{key}", type=float)
    common.add_argument("--config", help="flat JSON file; flags override its fields")
    common.add_argument("--out", help="directory for output files")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--delta", type=float)
    common.add_argument("--tol", type=float)
    common.add_argument("--x", type=float)
    common.add_argument("--s", type=float)
    common.add_argument("--variant", choices=("v", "u", "v_hat", "u_hat"))
    common.add_argument("--curves", action="store_const", const=True)
    common.add_argument("--seed", type=int)
    common.add_argument("--paths", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--tmax", type=float)
    common.add_argument("--thetas", help="comma-separated boundary scale factors")
    common.add_argument("--no-bridge", dest="bridge", action="store_const", const=False)
    common.add_argument("--divergence", action="store_const", const=True)
    common.add_argument("--horizons", help="comma-separated horizons for --divergence")

    parser = argparse.ArgumentParser(prog="watermark", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "roots": "characteristic roots, regime and measure-change parameters",
        "boundary": "solve the free boundary",
        "price": "value at (x, s)",
        "verify": "check the variational inequality",
        "mc": "Monte Carlo estimate, perturbation test or divergence probe",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_VALIDATION
    try:
        cfg = resolve_config(ns)
        return COMMANDS[ns.command](cfg, stdout)
    except (ValidationError, DomainError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except RegimeError as exc:
        msg = str(exc)
        stderr.write(f"regime error: {msg}\n")
        return EXIT_REGIME
    except SolverError as exc:
        stderr.write(f"solver error: {exc}\n")
        stderr.write(to_json({k: str(v) for k, v in exc.diagnostics.items()}) + "\n")
        return EXIT_SOLVER
    except McMisuseError as exc:
        stderr.write(f"misuse: {exc}\n")
        return EXIT_MC_MISUSE
