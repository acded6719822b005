"""Command line, experiment configuration and deterministic output files.

Verbs: ``green``, ``street``, ``equilibrium``, ``desingularize``,
``evolve`` and ``verify``. Every option can also come from a YAML or JSON
file given with ``--config``; flags on the command line win. Unknown keys
are rejected.

Tables are comma separated with ``#`` comment lines and a header row.
Records are JSON. Every float is written with ``%.17g``, so reading a
file back gives bit-identical numbers. Tables carry no timestamps; the
``provenance`` block of a record does.

Exit codes: 0 success, 2 validation, 3 numerical failure, 4 I/O.
"""
import argparse
import ast
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import datetime as _dt
import hashlib
import io
import json
import math
import operator
import os
import sys

import numpy as np
import yaml

from . import __version__
from .errors import (ConvergenceError, DomainError, IOFailure, OverlapError,
                     SphereVortexError, ValidationError)

SCHEMA_VERSION = "1"
RECORD_SCHEMA = "spherevortex.record/" + SCHEMA_VERSION


# ------------------------------------------------------------------ numbers

def format_float(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub,
           ast.Mult: operator.mul, ast.Div: operator.truediv}


def _eval_expr(node):
    if isinstance(node, ast.Expression):
        return _eval_expr(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_expr(node.left), _eval_expr(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_expr(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    raise ValueError("unsupported expression")


def parse_angle(text):
    """Radians as a number or an expression in ``pi`` (``pi/4``, ``2*pi/3``).

    Anything that looks like degrees is rejected outright.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    s = str(text).strip().lower()
    if "deg" in s or "°" in s:
        raise ValidationError(f"angles are radians only, got {text!r}")
    try:
        v = _eval_expr(ast.parse(s, mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ValidationError(f"cannot parse angle {text!r}") from None
    if not math.isfinite(v):
        raise ValidationError(f"angle {text!r} is not finite")
    return v


def parse_float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse number list {text!r}") from None


# ------------------------------------------------------------------ records

def dumps_record(obj, indent=1):
    """JSON text with every float as ``%.17g``."""
    buf = io.StringIO()
    _emit(obj, buf, 0, indent)
    buf.write("\n")
    return buf.getvalue()


def _emit(obj, out, level, indent):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.write(pad + json.dumps(str(k)) + ": ")
            _emit(v, out, level + 1, indent)
            out.write(",\n" if i < len(items) - 1 else "\n")
        out.write(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            out.write("[]")
            return
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)
               for v in seq):
            out.write("[" + ", ".join(_scalar(v) for v in seq) + "]")
            return
        out.write("[\n")
        for i, v in enumerate(seq):
            out.write(pad)
            _emit(v, out, level + 1, indent)
            out.write(",\n" if i < len(seq) - 1 else "\n")
        out.write(end + "]")
    else:
        out.write(_scalar(obj))


def _scalar(v):
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def loads_record(text):
    return json.loads(text)


def _sorted(obj):
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj, key=str)}
    return obj


def config_hash(params):
    """First 16 hex digits of the sha256 of the key-sorted record text."""
    return hashlib.sha256(dumps_record(_sorted(params)).encode()).hexdigest()[:16]


def make_record(command, inputs, outputs, arrays=None):
    return {
        "schema": RECORD_SCHEMA,
        "command": command,
        "inputs": inputs,
        "outputs": outputs,
        "arrays": arrays or {},
        "provenance": {
            "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "config_hash": config_hash(inputs),
        },
    }


def write_text(path, text):
    try:
        if path in (None, "-"):
            sys.stdout.write(text)
            return
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def read_text(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc


def format_table(header, rows, comments=()):
    lines = ["# " + c for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_float(v) if not isinstance(v, str) else v for v in row))
    return "\n".join(lines) + "\n"


def parse_table(text):
    """(header, rows as float lists) from :func:`format_table` output."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    return header, rows


# ------------------------------------------------------------------ configuration

@dataclass
class ExperimentConfig:
    """Validated parameters of one command."""

    command: str
    params: dict
    schema_version: str = SCHEMA_VERSION
    sources: dict = field(default_factory=dict)


def load_config_file(path):
    text = read_text(path)
    try:
        data = yaml.safe_load(text) if not path.endswith(".json") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a mapping")
    return data


def build_config(command, args, parser_defaults):
    """Merge ``--config`` values under explicit flags and reject unknown keys."""
    known = set(parser_defaults) - {"command", "config", "func"}
    params = dict(parser_defaults)
    sources = {k: "default" for k in known}
    if getattr(args, "config", None):
        data = load_config_file(args.config)
        version = str(data.pop("schema_version", SCHEMA_VERSION))
        if version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {version!r}")
        section = data.pop(command, None)
        if isinstance(section, dict):
            data = {**data, **section}
        for k, v in data.items():
            key = k.replace("-", "_")
            if key not in known:
                raise ValidationError(f"unknown config key {k!r} for {command}")
            params[key] = v
            sources[key] = "config"
    for k in known:
        v = getattr(args, k)
        if v is not None and v != parser_defaults.get(k):
            params[k] = v
            sources[k] = "flag"
    for k in ("command", "config", "func"):
        params.pop(k, None)
    return ExperimentConfig(command, params, SCHEMA_VERSION, sources)


def threads():
    raw = os.environ.get("SPHEREVORTEX_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"SPHEREVORTEX_THREADS={raw!r} is not an integer") from None
    if n < 1:
        raise ValidationError("SPHEREVORTEX_THREADS must be at least 1")
    return n


def ordered_map(func, items):
    """Map over independent jobs on up to SPHEREVORTEX_THREADS threads, in order."""
    n = threads()
    if n == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


# ------------------------------------------------------------------ serialisation

def street_to_dict(s):
    return {"k": s.k, "theta0": s.theta0, "kappa": s.kappa, "variant": s.variant}


def system_to_record(system):
    from .patch import boundary_aspect_ratio, patch_circulation

    patches = []
    for spec, curve in system.patches:
        a, b = curve.coefficients()
        patches.append({
            "theta": spec.center.colatitude, "phi": spec.center.longitude,
            "kappa": spec.kappa, "sign": spec.sign, "eps": spec.eps,
            "core_radius": spec.core_radius, "flux": spec.flux,
            "a": np.asarray(a), "b": np.asarray(b),
            "n_grid": int(curve.xi_grid.size),
            "circulation": patch_circulation(spec, curve),
            "aspect_ratio": boundary_aspect_ratio(spec, curve),
        })
    return {
        "mode": system.mode, "frame_speed": system.frame_speed, "eps": system.eps,
        "residual_norm": system.residual_norm, "converged": bool(system.converged),
        "iterations": int(system.iterations), "contraction": list(system.contraction),
        "residual_history": list(system.residual_history),
        "street": street_to_dict(system.street) if system.street else None,
        "n_modes": int(system.n_modes), "message": system.message,
        "patches": patches,
    }


def system_from_record(d):
    from .equilibria import StreetSpec
    from .patch import BoundaryCurve, PatchSpec, PatchSystem
    from .sphere_geom import SpherePoint

    try:
        patches = []
        for p in d["patches"]:
            spec = PatchSpec(SpherePoint(float(p["theta"]), float(p["phi"])), float(p["kappa"]),
                             int(p["sign"]), float(p["eps"]), float(p["core_radius"]),
                             float(p["flux"]))
            curve = BoundaryCurve.from_coefficients(p["a"], p["b"], int(p["n_grid"]))
            patches.append((spec, curve))
        st = d.get("street")
        street = StreetSpec(**st) if st else None
        return PatchSystem(patches, d["mode"], float(d["frame_speed"]), float(d["eps"]),
                           float(d["residual_norm"]), bool(d["converged"]),
                           int(d["iterations"]), list(d["contraction"]),
                           list(d["residual_history"]), street, int(d["n_modes"]),
                           d.get("message", ""))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed system record: {exc}") from None


# ------------------------------------------------------------------ commands

def _street_from(params):
    from .equilibria import StreetSpec

    return StreetSpec(int(params["k"]), parse_angle(params["theta0"]),
                      float(params["kappa"]), params["variant"])


def _grid_axis(lo_hi, n, name):
    vals = [parse_angle(v) for v in (lo_hi if isinstance(lo_hi, (list, tuple))
                                     else str(lo_hi).split(","))]
    if len(vals) != 2:
        raise ValidationError(f"{name} needs two values lo,hi")
    n = int(n)
    if n < 1:
        raise ValidationError(f"{name} needs at least one point")
    return np.linspace(vals[0], vals[1], n) if n > 1 else np.array([vals[0]])


def cmd_green(cfg):
    from .greens import H_DELTA, gamma_value, green_value, h_value
    from .sphere_geom import POLE_GUARD, SpherePoint, geodesic_distance

    p = cfg.params
    rows = []
    if p.get("points"):
        pairs = []
        for item in str(p["points"]).split(";"):
            vals = [parse_angle(v) for v in item.split(",") if v.strip()]
            if len(vals) != 4:
                raise ValidationError("each point pair needs theta,phi,theta2,phi2")
            pairs.append(vals)
    else:
        src = [parse_angle(v) for v in str(p["source"]).split(",")]
        if len(src) != 2:
            raise ValidationError("--source needs theta,phi")
        th = _grid_axis(p["theta_range"], p["n_theta"], "theta range")
        ph = _grid_axis(p["phi_range"], p["n_phi"], "phi range")
        pairs = [[t, f, src[0], src[1]] for t in th for f in ph]
    for t, f, t2, f2 in pairs:
        for v in (t, t2):
            if not POLE_GUARD <= v <= math.pi - POLE_GUARD:
                raise ValidationError(f"colatitude {v} touches a pole")
        z, zp = SpherePoint(t, f), SpherePoint(t2, f2)
        if geodesic_distance(z, zp) == 0.0:
            raise ValidationError("coincident points have no Green's function value")
        g = float(green_value(t, f, t2, f2))
        near = geodesic_distance(z, zp) <= H_DELTA
        gam = float(gamma_value(t, f, t2, f2)) if near else float("nan")
        h = float(h_value(t, f, t2, f2)) if near else float("nan")
        rows.append([t, f, t2, f2, g, gam, h])
    text = format_table(["theta", "phi", "theta2", "phi2", "G", "Gamma", "H"], rows,
                        [f"spherevortex {__version__} green",
                         "Gamma and H are NaN beyond the locality radius"])
    write_text(p["out"], text)
    return 0


def cmd_street(cfg):
    from .equilibria import karman_positions, karman_speed, relative_equilibrium_residual

    p = cfg.params
    s = _street_from(p)
    self_term = not p["no_self_term"]
    W = karman_speed(s, self_term)
    c = karman_positions(s)
    th, ph, sk = c.arrays()
    rec = make_record("street", dict(p), {
        "W": W, "W_classical": karman_speed(s, False),
        "residual": relative_equilibrium_residual(c, W, self_term),
    }, {"theta": th, "phi": ph, "signed_strength": sk})
    write_text(p["out"], dumps_record(rec))
    return 0


def _initial_config(p):
    from .equilibria import antipodal_dipole, karman_positions, karman_speed

    if p["kind"] == "dipole":
        c, rate = antipodal_dipole(parse_angle(p["theta_plus"]), float(p["kappa"]),
                                   not p["no_self_term"])
        return c
    if p["kind"] == "street":
        s = _street_from(p)
        from dataclasses import replace
        return replace(karman_positions(s), gamma=karman_speed(s, not p["no_self_term"]))
    raise ValidationError(f"unknown kind {p['kind']!r}")


def cmd_equilibrium(cfg):
    from .equilibria import find_critical_point

    p = cfg.params
    c0 = _initial_config(p)
    res = find_critical_point(c0, tol=float(p["tol"]), include_self_term=not p["no_self_term"])
    th, ph, sk = res.config.arrays()
    rec = make_record("equilibrium", dict(p), {
        "converged": res.converged, "gradient_norm": res.gradient_norm,
        "nondegenerate": res.nondegenerate, "iterations": res.iterations,
        "gamma": res.config.gamma, "message": res.message,
    }, {"theta": th, "phi": ph, "signed_strength": sk,
        "hessian_spectrum": res.hessian_spectrum,
        "complement_spectrum": res.complement_spectrum})
    write_text(p["out"], dumps_record(rec))
    return 0 if res.converged else 3


def _solve_one(args):
    from .patch import steady_patch_solve

    mode, eps, M, opts = args
    try:
        return eps, steady_patch_solve(mode, eps, M, **opts), None
    except (ConvergenceError, OverlapError) as exc:
        return eps, None, exc


def cmd_desingularize(cfg):
    from .equilibria import karman_speed
    from .patch import boundary_aspect_ratio, patch_circulation
    from .sphere_geom import wrap_angle

    p = cfg.params
    eps_list = parse_float_list(p["eps"])
    if not eps_list:
        raise ValidationError("need at least one eps")
    M = int(p["modes"])
    opts = {"n_quad": int(p["n_quad"]), "max_iter": int(p["max_iter"])}
    if p["kind"] == "street":
        mode = _street_from(p)
    else:
        mode = _initial_config(p)
    results = ordered_map(_solve_one, [(mode, e, M, opts) for e in eps_list])
    rows, failures, systems = [], [], {}
    if p["kind"] == "street":
        w_star = karman_speed(mode, not p["no_self_term"])
        header = ["eps", "core_radius", "W_solved", "W_star", "abs_W_error", "residual",
                  "circulation", "aspect_ratio", "t_inf", "iterations"]
    else:
        th0, ph0, _ = mode.arrays()
        header = ["eps", "core_radius", "residual", "center_displacement", "iterations"]
        header += [f"{a}{i}" for i in range(th0.size) for a in ("theta", "phi")]
    for eps, system, err in results:
        if err is not None:
            failures.append({"eps": eps, "error": type(err).__name__, "message": str(err),
                             "report": getattr(err, "report", None) or {}})
            continue
        systems[format_float(eps)] = system_to_record(system)
        spec, curve = system.patches[0]
        if p["kind"] == "street":
            W = system.frame_speed
            rows.append([eps, spec.core_radius, W, w_star, abs(W - w_star),
                         system.residual_norm, patch_circulation(spec, curve),
                         boundary_aspect_ratio(spec, curve), curve.norm_inf,
                         system.iterations])
        else:
            th, ph = system.centers()
            disp = float(np.max(np.hypot(th - th0, np.sin(th0) * wrap_angle(ph - ph0))))
            row = [eps, spec.core_radius, system.residual_norm, disp, system.iterations]
            for t, f in zip(th, ph):
                row += [t, f]
            rows.append(row)
    write_text(p["out"], format_table(header, rows, [f"spherevortex {__version__} desingularize",
                                                     f"kind={p['kind']} M={M}"]))
    if p["systems"]:
        write_text(p["systems"], dumps_record(make_record(
            "desingularize", dict(p), {"failures": failures}, {"systems": systems})))
    if failures:
        sys.stderr.write(dumps_record({"failures": failures}))
        return 3
    return 0


def _load_system(path, eps_key=None):
    rec = loads_record(read_text(path))
    if "arrays" in rec and "systems" in rec["arrays"]:
        systems = rec["arrays"]["systems"]
        if not systems:
            raise ValidationError(f"{path} holds no solved systems")
        key = eps_key if eps_key is not None else sorted(systems, key=float)[0]
        if key not in systems:
            matches = [k for k in systems if float(k) == float(key)]
            if not matches:
                raise ValidationError(f"no system for eps={key} in {path}")
            key = matches[0]
        return system_from_record(systems[key])
    return system_from_record(rec)


def cmd_evolve(cfg):
    from .contour_dynamics import (ContourState, diagnostics, run_and_measure,
                                   state_dump, state_from_system, state_load, step)

    p = cfg.params
    dt = float(p["dt"])
    if not dt > 0.0:
        raise ValidationError("dt must be positive")
    if p["resume"]:
        ck = loads_record(read_text(p["resume"]))
        state = state_load(ck["state"])
        done = int(ck["step"])
        total = int(ck["total_steps"])
        if float(ck["dt"]) != dt:
            raise ValidationError("dt differs from the checkpointed run")
    else:
        if not p["system"]:
            raise ValidationError("need --system or --resume")
        system = _load_system(p["system"], p["eps"])
        state = state_from_system(system, int(p["nodes"]))
        if p["lab_frame"]:
            state = ContourState(state.patches, 0.0, 0.0)
        T = float(p["T"]) if p["T"] is not None else 2 * math.pi / abs(system.frame_speed)
        total = int(round(T / dt))
        done = 0
    every = int(p["sample_every"])
    ck_every = int(p["checkpoint_every"]) if p["checkpoint"] else 0

    def save(i, st):
        rec = {"schema": RECORD_SCHEMA, "command": "evolve-checkpoint", "step": i,
               "total_steps": total, "dt": dt, "state": state_dump(st)}
        write_text(p["checkpoint"], dumps_record(rec))

    samples = [diagnostics(state)]
    for i in range(done, total):
        state = step(state, dt)
        if (i + 1) % every == 0 or i + 1 == total:
            samples.append(diagnostics(state))
        if ck_every and ((i + 1) % ck_every == 0 or i + 1 == total):
            save(i + 1, state)
        if p["stop_after"] is not None and i + 1 - done >= int(p["stop_after"]):
            if ck_every:
                save(i + 1, state)
            break
    from .contour_dynamics import DiagnosticsSeries

    if len(samples) < 2:
        samples.append(diagnostics(state))
    ser = DiagnosticsSeries.from_samples(samples)
    rows = []
    for k in range(ser.times.size):
        rows.append([ser.times[k], *ser.areas[k], *ser.colatitudes[k], *ser.longitudes[k],
                     ser.energy[k]])
    n = ser.areas.shape[1]
    header = (["time"] + [f"area{i}" for i in range(n)] + [f"colat{i}" for i in range(n)]
              + [f"lon{i}" for i in range(n)] + ["energy"])
    write_text(p["out"], format_table(header, rows, [f"spherevortex {__version__} evolve",
                                                    f"dt={format_float(dt)}"]))
    if p["record"]:
        rec = make_record("evolve", dict(p), {
            "fitted_drift": ser.drift, "frame_speed": state.gamma,
            "area_change": ser.area_change, "colatitude_drift": ser.colatitude_drift,
            "energy_change": ser.energy_change, "moment_change": ser.moment_change,
            "final_time": state.time,
        }, {"fitted_drifts": ser.fitted_drifts()})
        write_text(p["record"], dumps_record(rec))
    return 0


def cmd_verify(cfg):
    """Quick self-checks, one PASS/FAIL line each."""
    from .equilibria import (StreetSpec, karman_positions, karman_speed,
                             relative_equilibrium_residual)
    from .greens import green_value
    from .patch import solve_core_radius

    checks = []
    th, ph = 0.7, 1.1
    checks.append(("G vanishes at antipodes",
                   abs(float(green_value(th, ph, math.pi - th, ph + math.pi))) < 1e-14))
    checks.append(("G symmetric", abs(float(green_value(0.3, 0.2, 1.9, 2.5))
                                      - float(green_value(1.9, 2.5, 0.3, 0.2))) < 1e-14))
    worst = 0.0
    for k in (1, 2, 3):
        for t0 in (math.pi / 6, math.pi / 4, math.pi / 3):
            for var in ("type1", "type2"):
                s = StreetSpec(k, t0, 1.0, var)
                worst = max(worst, relative_equilibrium_residual(
                    karman_positions(s), karman_speed(s)))
    checks.append(("street relative equilibria", worst < 1e-10))
    checks.append(("core radius identity at kappa=pi",
                   abs(solve_core_radius(math.pi, 1e-3) - 1e-3) < 1e-12 * 1e-3))
    lines = [f"{'PASS' if ok else 'FAIL'} {name}" for name, ok in checks]
    write_text(cfg.params["out"], "\n".join(lines) + "\n")
    return 0 if all(ok for _, ok in checks) else 3


# ------------------------------------------------------------------ parser

def build_parser():
    ap = argparse.ArgumentParser(prog="spherevortex", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML or JSON file with option values")
        sp.add_argument("--out", default="-", help="output file ('-' for stdout)")

    def street_opts(sp):
        sp.add_argument("--k", type=int, default=2)
        sp.add_argument("--theta0", default="pi/4", help="radians, e.g. 0.785 or pi/4")
        sp.add_argument("--kappa", type=float, default=1.0)
        sp.add_argument("--variant", choices=["type1", "type2"], default="type1")
        sp.add_argument("--no-self-term", action="store_true",
                        help="drop the Robin self term (classical speeds)")

    g = sub.add_parser("green", help="tabulate G, Gamma and H")
    common(g)
    g.add_argument("--points", help="'th,ph,th2,ph2;...' in radians")
    g.add_argument("--source", default="pi/2,0")
    g.add_argument("--theta-range", default="0.5,2.5")
    g.add_argument("--phi-range", default="0,pi")
    g.add_argument("--n-theta", type=int, default=5)
    g.add_argument("--n-phi", type=int, default=5)
    g.set_defaults(func=cmd_green)

    s = sub.add_parser("street", help="Karman street positions and speed")
    common(s)
    street_opts(s)
    s.set_defaults(func=cmd_street)

    e = sub.add_parser("equilibrium", help="Newton search for a critical point of K")
    common(e)
    street_opts(e)
    e.add_argument("--kind", choices=["street", "dipole"], default="dipole")
    e.add_argument("--theta-plus", default="pi/3")
    e.add_argument("--tol", type=float, default=1e-10)
    e.set_defaults(func=cmd_equilibrium)

    d = sub.add_parser("desingularize", help="steady patch solutions over an eps sweep")
    common(d)
    street_opts(d)
    d.add_argument("--kind", choices=["street", "dipole"], default="street")
    d.add_argument("--theta-plus", default="pi/3")
    d.add_argument("--eps", default="0.04,0.02,0.01")
    d.add_argument("--modes", type=int, default=16)
    d.add_argument("--n-quad", type=int, default=1024)
    d.add_argument("--max-iter", type=int, default=40)
    d.add_argument("--systems", help="JSON file for the solved systems")
    d.set_defaults(func=cmd_desingularize)

    v = sub.add_parser("evolve", help="contour dynamics of a solved system")
    common(v)
    v.add_argument("--system", help="system record (or desingularize --systems file)")
    v.add_argument("--eps", help="which eps to take from a sweep file")
    v.add_argument("--T", type=float, help="duration (default one drift period)")
    v.add_argument("--dt", type=float, default=0.05)
    v.add_argument("--nodes", type=int, default=64)
    v.add_argument("--sample-every", type=int, default=10)
    v.add_argument("--lab-frame", action="store_true", help="evolve with gamma = 0")
    v.add_argument("--checkpoint", help="checkpoint file, rewritten periodically")
    v.add_argument("--checkpoint-every", type=int, default=100)
    v.add_argument("--resume", help="continue from a checkpoint file")
    v.add_argument("--stop-after", type=int, help="stop after this many steps")
    v.add_argument("--record", help="JSON summary record")
    v.set_defaults(func=cmd_evolve)

    y = sub.add_parser("verify", help="quick self-checks")
    common(y)
    y.set_defaults(func=cmd_verify)
    return ap


def _defaults(parser, command):
    for action in parser._subparsers._group_actions:
        sp = action.choices[command]
        return {a.dest: a.default for a in sp._actions if a.dest != "help"}
    return {}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args.command, args, _defaults(parser, args.command))
        return int(args.func(cfg))
    except SphereVortexError as exc:
        sys.stderr.write(f"spherevortex {args.command}: {type(exc).__name__}: {exc}\n")
        dump = getattr(exc, "dump", None)
        if dump is not None:
            sys.stderr.write(dumps_record({"dump": dump}))
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"spherevortex {args.command}: I/O error: {exc}\n")
        return IOFailure.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
