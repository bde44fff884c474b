"""Command-line entry point: ``mlheat <command> --config job.json``.

Exit codes: 0 success, 1 tolerance or numerical failure, 2 invalid input.
Every CSV starts with a ``#`` metadata line (version, config sha256, seed)
followed by a header row. Outputs depend only on the config and the seed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy import integrate

from . import __version__
from .errors import DerivativeOrderError, MatchingConditionError, MlheatError, ParameterError
from .expansion import PiecewiseInitialData, expand_u
from .kernels import FORMS, evaluate, kernel_two_interface
from .medium import PhysicalMedium, SdeParams, to_sde_params
from .montecarlo import SamplerConfig, estimate_expectation, simulate_path
from .pde import BoundaryInfluenceWarning, grid_for_problem, make_grid, oracle_values, solve

__all__ = ["main", "JobConfig", "load_config"]

COMMANDS = ("kernel", "expand", "simulate", "solve-pde", "compare")
_FORM_ALIASES = {"two_interface": "two_interface_special", "single_0": "single_at_0",
                 "single_a": "single_at_a"}

# allowed keys per section; values are defaults (None = required or optional without default)
_SECTIONS: dict[str, dict[str, Any]] = {
    "kernel": {"form": "single_at_0", "t": None, "x": None, "y": None, "gamma": None},
    "expand": {"x": None, "t": []},
    "simulate": {"x0": None, "T": None, "n_paths": 10_000, "dt_max": 1e-2,
                 "coupling_eps": 1e-9, "block_size": 8192, "closed_form": False,
                 "dump_paths": None},
    "solve_pde": {"T": None, "dx": 1e-3, "dt": None, "n_cells": None, "domain": None,
                  "richardson": 0, "x": None},
    "compare": {"x": None, "T": None, "n_paths": 100_000, "dx": 1e-3,
                "routes": ["expansion", "mc", "oracle", "closed_form"],
                "mc_sigmas": 3.0, "abs_tol": 0.0},
}
_TOP = {"medium", "initial_data", "seed", "output"} | set(_SECTIONS)


class UsageError(MlheatError):
    pass


@dataclass(frozen=True)
class JobConfig:
    medium: PhysicalMedium
    initial_data: PiecewiseInitialData | None
    sections: dict
    seed: int
    output: str | None
    sha256: str


def _section(raw: dict, name: str) -> dict:
    given = raw.get(name, {})
    if not isinstance(given, dict):
        raise ParameterError(f"section {name!r} must be a JSON object")
    extra = set(given) - set(_SECTIONS[name])
    if extra:
        raise ParameterError(f"unknown keys in {name!r}: {sorted(extra)}")
    out = dict(_SECTIONS[name])
    out.update(given)
    return out


def _seed(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2**64:
        raise ParameterError(f"seed must be an integer in [0, 2^64), got {value!r}")
    return value


def load_config(text: bytes, seed_override: int | None = None) -> JobConfig:
    """Parse and validate a job config; every module invariant is checked here."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from None
    if not isinstance(raw, dict):
        raise ParameterError("config must be a JSON object")
    extra = set(raw) - _TOP
    if extra:
        raise ParameterError(f"unknown config keys: {sorted(extra)}")
    if "medium" not in raw:
        raise ParameterError("config needs a 'medium' descriptor")
    medium = PhysicalMedium.from_dict(raw["medium"])
    h = PiecewiseInitialData.from_dict(raw["initial_data"]) if "initial_data" in raw else None
    sections = {name: _section(raw, name) for name in _SECTIONS}
    seed = _seed(raw.get("seed", 0) if seed_override is None else seed_override)
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ParameterError("'output' must be a path string")
    return JobConfig(medium, h, sections, seed, output, hashlib.sha256(text).hexdigest())


# ------------------------------------------------------------------ helpers


def _params(m: PhysicalMedium) -> SdeParams:
    params = to_sde_params(m)
    if m.is_matched() and not params.is_matched():
        # gauge-invariant check passed; remove rounding in beta
        params = SdeParams(params.p, params.q, params.r, params.alpha, params.matched_beta, params.a)
    return params


def _floats(value, name: str) -> np.ndarray:
    if value is None:
        raise ParameterError(f"missing required option {name!r}")
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name!r} must be a finite number or non-empty list")
    return arr


def _need_h(job: JobConfig) -> PiecewiseInitialData:
    if job.initial_data is None:
        raise ParameterError("this command needs an 'initial_data' descriptor")
    return job.initial_data


def _meta(job: JobConfig) -> str:
    return f"# mlheat {__version__} config_sha256={job.sha256} seed={job.seed}\n"


def _csv(job: JobConfig, header, rows) -> str:
    buf = io.StringIO()
    buf.write(_meta(job))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _meta_dict(job: JobConfig) -> dict:
    return {"version": __version__, "config_sha256": job.sha256, "seed": job.seed}


def _sibling(out: Path | None, suffix: str) -> Path | None:
    return None if out is None else out.with_name(out.stem + suffix + out.suffix)


# ------------------------------------------------------------------ commands


def cmd_kernel(job: JobConfig, form_override: str | None = None):
    opt = job.sections["kernel"]
    form = form_override or opt["form"]
    form = _FORM_ALIASES.get(form, form)
    if form not in FORMS:
        raise ParameterError(f"unknown kernel form {form!r}; expected one of {FORMS}")
    params = _params(job.medium)
    if form in ("two_interface_special", "m_symmetric") and not job.medium.is_matched():
        m = job.medium
        raise MatchingConditionError(
            f"form {form!r} needs the matching condition rho2*sqrt(a2) = rho3*sqrt(a3); "
            f"got {m.rho2 * math.sqrt(m.a2)!r} vs {m.rho3 * math.sqrt(m.a3)!r}"
        )
    ts, xs, ys = (_floats(opt[k], k) for k in ("t", "x", "y"))
    rows = []
    for t in ts:
        for x in xs:
            for y in ys:
                ev = evaluate(form, params, float(t), float(x), float(y),
                              medium=job.medium, gamma=opt["gamma"])
                rows.append((float(t), float(x), float(y), ev.value, ev.form))
    return {"main": _csv(job, ["t", "x", "y", "density", "form"], rows)}


def cmd_expand(job: JobConfig):
    opt = job.sections["expand"]
    h = _need_h(job)
    params = _params(job.medium)
    xs = _floats(opt["x"], "x")
    ts = np.atleast_1d(np.asarray(opt["t"], dtype=float))
    coef_rows, sum_rows = [], []
    for x in xs:
        res = expand_u(params, h, float(x))
        for k, bk in enumerate(res.coefficients):
            coef_rows.append((float(x), k, float(bk), res.order_tag))
        for t in ts:
            if not t > 0:
                raise ParameterError("expansion times must be > 0")
            sum_rows.append((float(x), float(t), float(res.partial_sum(float(t)))))
    return {
        "main": _csv(job, ["x", "k", "b_k", "branch"], coef_rows),
        "_partial_sums": _csv(job, ["x", "t", "partial_sum"], sum_rows),
    }


def _sampler(job: JobConfig, opt: dict) -> SamplerConfig:
    return SamplerConfig(dt_max=float(opt["dt_max"]), coupling_eps=float(opt["coupling_eps"]),
                         n_paths=opt["n_paths"], seed=job.seed, block_size=opt["block_size"])


def cmd_simulate(job: JobConfig):
    opt = job.sections["simulate"]
    h = _need_h(job)
    params = _params(job.medium)
    x0 = float(_floats(opt["x0"], "x0")[0])
    T = float(_floats(opt["T"], "T")[0])
    cfg = _sampler(job, opt)
    est = estimate_expectation(params, h, x0, T, cfg, closed_form=bool(opt["closed_form"]))
    summary = dict(est.to_dict(), x0=x0, T=T, metadata=_meta_dict(job))
    out = {"main": _json(summary)}
    if opt["dump_paths"]:
        sample = simulate_path(params, x0, T, cfg, closed_form=bool(opt["closed_form"]))
        out[("path", opt["dump_paths"])] = _csv(job, ["path_id", "t", "x", "scheme"], sample.iter_rows())
    return out


def cmd_solve_pde(job: JobConfig):
    opt = job.sections["solve_pde"]
    h = _need_h(job)
    m = job.medium
    rows = []
    for T in _floats(opt["T"], "T"):
        T = float(T)
        dt = float(opt["dt"]) if opt["dt"] is not None else T / 200
        if opt["domain"] is not None:
            lo, hi = (float(v) for v in opt["domain"])
            dx = (hi - lo) / int(opt["n_cells"]) if opt["n_cells"] else float(opt["dx"])
            grid = make_grid(m.a, lo, hi, dx)
        else:
            pts = opt["x"] if opt["x"] is not None else [0.0, m.a]
            grid = grid_for_problem(m, T, _floats(pts, "x"), float(opt["dx"]))
        field = solve(m, h, T, grid, dt, richardson=int(opt["richardson"]))
        if opt["x"] is None:
            rows.extend((T, float(x), float(u)) for x, u in field.to_csv_rows())
        else:
            xs = _floats(opt["x"], "x")
            rows.extend((T, float(x), float(u)) for x, u in zip(xs, field.at(xs)))
    return {"main": _csv(job, ["t", "x", "u"], rows)}


def _closed_form_value(params: SdeParams, h: PiecewiseInitialData, x: float, T: float) -> float:
    width = 40.0 * params.max_diffusion * math.sqrt(T)
    lo, hi = x - width, x + width
    cuts = sorted({lo, hi} | {c for c in (0.0, params.a) if lo < c < hi})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(lambda y: kernel_two_interface(params, T, x, y) * h(y, params.a),
                                a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return total


def cmd_compare(job: JobConfig):
    opt = job.sections["compare"]
    h = _need_h(job)
    params = _params(job.medium)
    xs = _floats(opt["x"], "x")
    T = float(_floats(opt["T"], "T")[0])
    routes = list(opt["routes"])
    unknown = set(routes) - {"expansion", "mc", "oracle", "closed_form"}
    if unknown:
        raise ParameterError(f"unknown compare routes: {sorted(unknown)}")
    if "closed_form" in routes and not params.is_matched():
        routes.remove("closed_form")
    orc = oracle_values(job.medium, h, T, xs, dx=float(opt["dx"])) if "oracle" in routes else None
    points = []
    all_pass = True
    for i, x in enumerate(xs):
        x = float(x)
        vals: dict[str, float] = {}
        stderr = 0.0
        bound = 0.0
        if orc is not None:
            vals["oracle"] = float(orc.values[i])
            bound = float(orc.bound[i])
        if "expansion" in routes:
            vals["expansion"] = float(expand_u(params, h, x, T).value)
        if "mc" in routes:
            cfg = SamplerConfig(n_paths=opt["n_paths"], seed=job.seed)
            est = estimate_expectation(params, h, x, T, cfg)
            vals["mc"] = est.estimate
            stderr = est.stderr
        if "closed_form" in routes:
            vals["closed_form"] = _closed_form_value(params, h, x, T)
        tol = max(float(opt["mc_sigmas"]) * stderr, bound) + float(opt["abs_tol"])
        pairs = []
        names = sorted(vals)
        for a_i, a in enumerate(names):
            for b in names[a_i + 1:]:
                res = vals[a] - vals[b]
                ok = abs(res) <= tol
                all_pass &= ok
                pairs.append({"pair": f"{a}-{b}", "residual": res, "tolerance": tol, "pass": ok})
        points.append({"x": x, "values": vals, "mc_stderr": stderr, "oracle_bound": bound,
                       "pairs": pairs})
    report = {"T": T, "routes": sorted(routes), "points": points, "pass": all_pass,
              "metadata": _meta_dict(job)}
    return {"main": _json(report)}, all_pass


# ------------------------------------------------------------------ driver


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlheat", description="Two-interface heat equation toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="job config (JSON)")
    common.add_argument("--out", help="output file (default: config 'output' or stdout)")
    common.add_argument("--seed", type=int, help="RNG seed, overrides the config")
    common.add_argument("--quiet", action="store_true", help="suppress diagnostics on stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    kp = sub.add_parser("kernel", parents=[common], help="tabulate a closed-form kernel")
    kp.add_argument("--form", help=f"kernel form, one of {FORMS} (or two_interface)")
    for name, text in (("expand", "small-time expansion coefficients"),
                       ("simulate", "Monte Carlo estimate of E[h(Y_T)]"),
                       ("solve-pde", "finite-volume reference solution"),
                       ("compare", "cross-check all routes")):
        sub.add_parser(name, parents=[common], help=text)
    return ap


def _write(outputs: dict, out: Path | None):
    for key, text in outputs.items():
        if key == "main":
            target = out
        elif isinstance(key, tuple):
            target = Path(key[1]) if out is None else out.parent / key[1]
        else:
            target = _sibling(out, key)
        if target is None:
            sys.stdout.write(text)
        else:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "w", newline="") as fh:
                fh.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)

    def say(msg):
        if not args.quiet:
            print(msg, file=sys.stderr)

    try:
        try:
            text = Path(args.config).read_bytes()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        job = load_config(text, args.seed)
        out = args.out or job.output
        out = Path(out) if out else None
        passed = True
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", BoundaryInfluenceWarning)
            if args.command == "kernel":
                outputs = cmd_kernel(job, args.form)
            elif args.command == "expand":
                outputs = cmd_expand(job)
            elif args.command == "simulate":
                outputs = cmd_simulate(job)
            elif args.command == "solve-pde":
                outputs = cmd_solve_pde(job)
            else:
                outputs, passed = cmd_compare(job)
        for w in caught:
            say(f"warning: {w.message}")
        _write(outputs, out)
    except (UsageError, ParameterError, MatchingConditionError, DerivativeOrderError,
            ValueError, TypeError) as exc:
        print(f"mlheat: error: {exc}", file=sys.stderr)
        return 2
    except MlheatError as exc:
        print(f"mlheat: error: {exc}", file=sys.stderr)
        return 1
    if not passed:
        say("compare: tolerance check failed")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
