"""Scenario runner: INI-style suite files in, JSON and CSV reports out.

A suite file has one ``[suite]`` section and any number of
``[potential NAME]``, ``[function NAME]`` and ``[check NAME]`` sections::

    [suite]
    name = demo
    seed = 0

    [potential G]
    kind = gaussian

    [function lin]
    family = linear
    a = 1.0

    [check gauss-linear]
    checker = mlsi
    potential = G
    function = lin
    expect = equality

Exit codes of ``run``: 0 when every report passes, 1 when an inequality
is violated (or a claimed equality misses its tolerance), 2 on
configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import functionals as fn
from . import inequalities as iq
from . import prekopa_transport as pt
from .convex_core import GridFunction, Potential, gaussian_potential, make_builtin_potential
from .errors import MLSIError, ScenarioSkipped
from .expr import ExpressionError, parse_expression
from .quadrature import scenario_rule

__all__ = ["ConfigError", "ScenarioConfig", "SuiteResult", "parse_config", "run_suite",
           "emit_curve", "main", "OUTPUT_ENV"]

OUTPUT_ENV = "MLSI_LAB_OUTPUT_DIR"

SUITE_KEYS = {"name", "seed", "resolution", "tail_tol", "output", "description"}
POTENTIAL_KEYS = {"kind", "dim", "p", "coef", "a", "b", "h_quadratic", "h_quartic", "grid"}
FUNCTION_KEYS = {"family", "dim", "a", "c", "c0", "k", "center", "b", "potential", "radius", "height", "expr"}
COMMON_CHECK_KEYS = {"checker", "potential", "function", "tol", "expect", "resolution", "tail_tol", "expected"}

# per-checker extra keys, required keys and sweepable numeric parameters
CHECKERS = {
    "mlsi": (set(), {"potential", "function"}, set()),
    "gross_reduction": ({"bound"}, {"function"}, set()),
    "brascamp_lieb": ({"eps_ladder"}, {"potential", "function"}, set()),
    "perturbation": ({"perturbation"}, {"potential", "function", "perturbation"}, set()),
    "power_constant": ({"p", "radii", "angles"}, {"p"}, {"p"}),
    "euclidean_lsi": ({"lambda"}, {"potential", "function", "lambda"}, {"lambda"}),
    "optimal_lambda": ({"lambda_max"}, {"potential", "function"}, set()),
    "homogeneous_lsi": (set(), {"potential", "function"}, set()),
    "psi_alpha": ({"alpha", "grid"}, {"potential", "alpha"}, {"alpha"}),
    "min_A": ({"grid"}, {"potential"}, set()),
    "large_entropy": ({"alpha_grid", "lambda_grid"}, {"potential", "function"}, set()),
    "lemma_order": ({"s_ladder", "z_grid", "min_slope"}, {"potential", "function"}, {"s"}),
    "transport": ({"density", "k"}, {"potential", "density"}, {"k"}),
    "fixture": ({"lhs", "rhs"}, {"lhs", "rhs"}, {"lhs", "rhs"}),
}

FAMILIES = {"constant", "linear", "quadratic", "neg-potential", "bump", "custom"}
EXPECT = {"inequality", "equality", "error"}


class ConfigError(MLSIError, ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated suite description; section contents are kept as strings."""

    name: str
    seed: int
    resolution: Optional[int]
    tail_tol: float
    output: Optional[str]
    potentials: dict
    functions: dict
    checks: dict  # ordered: check name -> dict of keys
    text: str = ""
    base_dir: str = "."

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


@dataclass
class SuiteResult:
    name: str
    reports: list
    skipped: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    timestamp: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 2
        return 1 if self.violations else 0

    def to_dict(self) -> dict:
        return {"suite": self.name, "metadata": self.metadata,
                "reports": [r.to_dict() for r in self.reports],
                "skipped": self.skipped, "errors": self.errors, "violations": self.violations,
                "exit_code": self.exit_code, "timestamp": self.timestamp}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def csv_summary(self) -> str:
        return reports_csv([r.to_dict() for r in self.reports])


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "checker", "lhs", "rhs", "deficit", "tol", "pass"])
    for r in reports:
        w.writerow([r["name"], r["metadata"].get("checker", ""), repr(r["lhs"]), repr(r["rhs"]),
                    repr(r["deficit"]), repr(r["tol"]), "true" if r["pass"] else "false"])
    return buf.getvalue()


# --------------------------------------------------------------------------
# parsing


def _floats(text: str):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def parse_ladder(text: str) -> np.ndarray:
    """``a,b,c`` lists, ``lo:hi:n`` linear ladders and ``geom:lo:hi:n`` geometric ones."""
    text = text.strip()
    if not text:
        raise ValueError("empty ladder")
    if text.startswith("geom:"):
        lo, hi, n = text[5:].split(":")
        vals = np.geomspace(float(lo), float(hi), int(n))
    elif ":" in text:
        lo, hi, n = text.split(":")
        vals = np.linspace(float(lo), float(hi), int(n))
    else:
        vals = np.array(_floats(text))
    if vals.size == 0:
        raise ValueError("empty ladder")
    return vals


def _section(raw: configparser.ConfigParser, sec: str) -> dict:
    return {k: v.strip() for k, v in raw.items(sec, raw=True)}


def parse_config(text: str, base_dir: str = ".") -> ScenarioConfig:
    """Parse and validate a suite; every problem found is reported at once."""
    errors = []
    raw = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None,
                                    default_section="__defaults__")
    raw.optionxform = str
    try:
        raw.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None

    suite, potentials, functions, checks = {}, {}, {}, {}
    for sec in raw.sections():
        head, _, name = sec.partition(" ")
        name = name.strip()
        body = _section(raw, sec)
        if head == "suite" and not name:
            suite = body
        elif head == "potential" and name:
            potentials[name] = body
        elif head == "function" and name:
            functions[name] = body
        elif head == "check" and name:
            checks[name] = body
        else:
            errors.append(f"[{sec}]: unknown section")
    if not suite:
        errors.append("missing [suite] section")
    for k in suite:
        if k not in SUITE_KEYS:
            errors.append(f"[suite]: unknown key {k!r}")

    def num(where, body, key, kind=float, default=None, positive=False):
        if key not in body:
            return default
        try:
            v = kind(body[key])
        except ValueError:
            errors.append(f"{where}: {key} = {body[key]!r} is not a number")
            return default
        if positive and not v > 0:
            errors.append(f"{where}: {key} must be positive")
        return v

    seed = num("[suite]", suite, "seed", int, 0)
    resolution = num("[suite]", suite, "resolution", int, None, positive=True)
    tail_tol = num("[suite]", suite, "tail_tol", float, 1e-10, positive=True)

    pdims = {}
    for pname, body in potentials.items():
        where = f"[potential {pname}]"
        for k in body:
            if k not in POTENTIAL_KEYS:
                errors.append(f"{where}: unknown key {k!r}")
        kind = body.get("kind")
        dim = num(where, body, "dim", int, 1, positive=True)
        pdims[pname] = dim
        if kind not in ("gaussian", "power", "powerlog", "interaction", "custom-grid"):
            errors.append(f"{where}: unknown potential kind {kind!r}")
        elif kind == "power":
            p = num(where, body, "p", float)
            if p is None:
                errors.append(f"{where}: power potential needs p")
            elif not p > 1:
                errors.append(f"{where}: p must exceed 1")
        elif kind == "powerlog":
            a = num(where, body, "a", float)
            if a is None or not a > 1:
                errors.append(f"{where}: powerlog needs a > 1")
            if dim != 1:
                errors.append(f"{where}: powerlog is one-dimensional")
        elif kind == "interaction" and dim < 2:
            errors.append(f"{where}: interaction needs dim >= 2")
        elif kind == "custom-grid" and "grid" not in body:
            errors.append(f"{where}: custom-grid needs a grid CSV path")

    fdims = {}
    for fname, body in functions.items():
        where = f"[function {fname}]"
        for k in body:
            if k not in FUNCTION_KEYS:
                errors.append(f"{where}: unknown key {k!r}")
        fam = body.get("family", "custom" if "expr" in body else None)
        dim = num(where, body, "dim", int, None, positive=True)
        if fam not in FAMILIES:
            errors.append(f"{where}: unknown family {fam!r}")
            continue
        if fam == "neg-potential":
            ref = body.get("potential")
            if ref not in potentials:
                errors.append(f"{where}: neg-potential refers to unknown potential {ref!r}")
            else:
                if dim is not None and dim != pdims[ref]:
                    errors.append(f"{where}: dim {dim} differs from potential {ref} (dim {pdims[ref]})")
                dim = pdims[ref]
        if fam == "linear" and "a" in body and dim is None:
            dim = len(_floats(body["a"]))
        dim = dim or 1
        fdims[fname] = dim
        if fam == "custom":
            if "expr" not in body:
                errors.append(f"{where}: custom family needs expr")
            else:
                try:
                    parse_expression(body["expr"], dim)
                except ExpressionError as exc:
                    errors.append(f"{where}: expr: {exc}")
        for key in ("a", "center"):
            if key in body:
                try:
                    vals = _floats(body[key])
                    if len(vals) not in (1, dim):
                        errors.append(f"{where}: {key} has {len(vals)} entries for dim {dim}")
                except ValueError:
                    errors.append(f"{where}: {key} is not a number list")
        for key in ("c", "c0", "k", "b", "radius", "height"):
            num(where, body, key, float, positive=key == "radius")

    for cname, body in checks.items():
        where = f"[check {cname}]"
        checker = body.get("checker")
        if checker not in CHECKERS:
            errors.append(f"{where}: unknown checker {checker!r}")
            continue
        extra, required, _ = CHECKERS[checker]
        for k in body:
            if k not in COMMON_CHECK_KEYS | extra:
                errors.append(f"{where}: unknown key {k!r} for checker {checker}")
        for k in sorted(required):
            if k not in body:
                errors.append(f"{where}: checker {checker} needs {k!r}")
        if "expect" in body and body["expect"] not in EXPECT:
            errors.append(f"{where}: expect must be one of {sorted(EXPECT)}")
        pref, fref = body.get("potential"), body.get("function")
        if pref is not None and pref not in potentials:
            errors.append(f"{where}: unknown potential {pref!r}")
        if fref is not None and fref not in functions:
            errors.append(f"{where}: unknown function {fref!r}")
        if pref in pdims and fref in fdims and pdims[pref] != fdims[fref]:
            errors.append(f"{where}: dimension mismatch, potential {pref} is {pdims[pref]}-D "
                          f"and function {fref} is {fdims[fref]}-D")
        pdim = pdims.get(pref, fdims.get(fref, 1))
        for key in ("perturbation", "density"):
            if key in body:
                try:
                    parse_expression(body[key], pdim)
                except ExpressionError as exc:
                    errors.append(f"{where}: {key}: {exc}")
        for key in ("eps_ladder", "radii", "angles", "grid", "alpha_grid", "lambda_grid", "s_ladder", "z_grid"):
            if key in body:
                try:
                    parse_ladder(body[key])
                except ValueError as exc:
                    errors.append(f"{where}: {key}: {exc}")
        for key in ("tol", "lambda", "p", "alpha", "bound", "lambda_max", "lhs", "rhs", "expected", "min_slope"):
            num(where, body, key, float)
        num(where, body, "k", int, positive=True)
        num(where, body, "resolution", int, positive=True)
        num(where, body, "tail_tol", float, positive=True)
        if checker == "psi_alpha" and "alpha" in body:
            a = num(where, body, "alpha", float)
            if a is not None and not 0 < a < 1:
                errors.append(f"{where}: alpha must lie in (0, 1)")
        if checker == "euclidean_lsi" and "lambda" in body:
            lam = num(where, body, "lambda", float)
            if lam is not None and not lam > 0:
                errors.append(f"{where}: lambda must be positive")
    if not checks:
        errors.append("suite declares no [check ...] sections")
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(suite.get("name", "suite"), seed, resolution, tail_tol, suite.get("output"),
                          potentials, functions, checks, text, base_dir)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path.parent))


# --------------------------------------------------------------------------
# building objects


def build_potential(cfg: ScenarioConfig, name: str) -> Potential:
    body = cfg.potentials[name]
    kind = body["kind"]
    params = {}
    for k in ("p", "coef", "a", "b", "h_quadratic", "h_quartic"):
        if k in body:
            params[k] = float(body[k])
    if kind == "custom-grid":
        params["grid"] = GridFunction.from_csv(Path(cfg.base_dir) / body["grid"])
    return make_builtin_potential(kind, int(body.get("dim", 1)), seed=cfg.seed, **params)


def build_function(cfg: ScenarioConfig, name: str) -> fn.TestFunction:
    body = cfg.functions[name]
    fam = body.get("family", "custom")
    if fam == "neg-potential":
        P = build_potential(cfg, body["potential"])
        dim = P.dim
    else:
        dim = int(body.get("dim", len(_floats(body["a"])) if fam == "linear" and "a" in body else 1))
    center = _floats(body["center"]) if "center" in body else 0.0
    if fam == "constant":
        return fn.constant(float(body.get("c", 0.0)), dim)
    if fam == "linear":
        return fn.linear(_floats(body.get("a", "1")), dim, float(body.get("c0", 0.0)))
    if fam == "quadratic":
        return fn.quadratic(float(body.get("k", 1.0)), dim, center, float(body.get("c0", 0.0)))
    if fam == "neg-potential":
        return fn.neg_potential(P, float(body.get("b", 1.0)), center)
    if fam == "bump":
        return fn.bump(dim, center, float(body.get("radius", 1.0)), float(body.get("height", 1.0)))
    return fn.from_expression(body["expr"], dim)


def _expr_callable(text: str, dim: int):
    e = parse_expression(text, dim)
    return lambda x: e(x)


def _rule(cfg, body, P, g=None, reference="mu"):
    res = int(body["resolution"]) if "resolution" in body else cfg.resolution
    tail = float(body.get("tail_tol", cfg.tail_tol))
    return scenario_rule(P, tilt=None if g is None else g.func, reference=reference,
                         tail_tol=tail, resolution=res)


def _scalar_report(name, value, body, extra=None, default_tol=1e-6):
    ref = float(body["expected"]) if "expected" in body else value
    tol = float(body.get("tol", default_tol))
    return iq.DeficitReport(name, float(value), float(ref), tol, dict(extra or {}))


def run_check(cfg: ScenarioConfig, cname: str, overrides: Optional[dict] = None) -> iq.DeficitReport:
    """Run one ``[check]`` section; ``overrides`` replaces keys, None deletes one."""
    body = dict(cfg.checks[cname])
    for k, v in (overrides or {}).items():
        if v is None:
            body.pop(k, None)
        else:
            body[k] = str(v)
    checker = body["checker"]
    P = build_potential(cfg, body["potential"]) if "potential" in body else None
    g = build_function(cfg, body["function"]) if "function" in body else None
    meta = {"checker": checker}

    if checker == "mlsi":
        rep = iq.check_mlsi(P, g, _rule(cfg, body, P, g))
    elif checker == "gross_reduction":
        # pointwise identity: the Gaussian box suffices, e^g need not be integrable
        r = _rule(cfg, body, gaussian_potential(g.dim))
        res = iq.gross_reduction_residual(g, r)
        bound = float(body.get("bound", 1e-8))
        rep = iq.DeficitReport(cname, res, bound, 0.0, {"residual": res})
    elif checker == "brascamp_lieb":
        eps = tuple(parse_ladder(body["eps_ladder"])) if "eps_ladder" in body else (0.1, 0.05, 0.025)
        rep = iq.check_brascamp_lieb(P, g, _rule(cfg, body, P, g), eps)
    elif checker == "perturbation":
        U = _expr_callable(body["perturbation"], P.dim)
        rep = iq.check_perturbation(P, U, g, _rule(cfg, body, P, g))
    elif checker == "power_constant":
        kw = {}
        if "radii" in body:
            kw["radii"] = parse_ladder(body["radii"])
        if "angles" in body:
            kw["angles"] = parse_ladder(body["angles"])
        c = iq.power_mlsi_constant(float(body["p"]), **kw)
        rep = _scalar_report(cname, c, body, {"p": float(body["p"])}, 1e-4)
    elif checker == "euclidean_lsi":
        rep = iq.euclidean_lsi_check(P, g, float(body["lambda"]), _rule(cfg, body, P, g, "dx"))
    elif checker == "optimal_lambda":
        lam, resid = iq.optimal_lambda(P, g, _rule(cfg, body, P, g, "dx"),
                                       lam_max=float(body.get("lambda_max", 1e3)))
        rep = _scalar_report(cname, lam, body, {"stationarity_residual": resid}, 1e-4)
    elif checker == "homogeneous_lsi":
        rep = iq.homogeneous_lsi_check(P, g, _rule(cfg, body, P, g, "dx"), seed=cfg.seed)
    elif checker == "psi_alpha":
        grid = parse_ladder(body["grid"]) if "grid" in body else None
        val = iq.psi_alpha(P, float(body["alpha"]), grid)
        rep = _scalar_report(cname, val, body, {"alpha": float(body["alpha"])})
    elif checker == "min_A":
        grid = parse_ladder(body["grid"]) if "grid" in body else _rule(cfg, body, P).nodes
        A, probe = iq.min_A(P, grid, return_probe=True)
        rep = _scalar_report(cname, A, body, probe)
    elif checker == "large_entropy":
        kw = {}
        if "alpha_grid" in body:
            kw["alpha_grid"] = parse_ladder(body["alpha_grid"])
        if "lambda_grid" in body:
            kw["lam_grid"] = parse_ladder(body["lambda_grid"])
        consts = iq.derive_large_entropy_constants(P, _rule(cfg, body, P), **kw)
        rep = iq.check_large_entropy(P, g, consts, _rule(cfg, body, P, g))
        meta.update({f"selection_{k}": v for k, v in consts.metadata.items()})
    elif checker == "lemma_order":
        if "s" in body:
            s_ladder = (float(body["s"]), float(body["s"]) / 2.0)
        else:
            s_ladder = tuple(parse_ladder(body.get("s_ladder", "0.01,0.005,0.0025")))
        z = parse_ladder(body["z_grid"]) if "z_grid" in body else None
        order = pt.lemma_expansion_order(P, g, s_ladder, z)
        lo = float(body.get("min_slope", 1.8))
        slope = math.inf if order.exact else order.slope
        extra = {"errors": list(order.errors), "s_ladder": list(order.s_ladder), "exact": order.exact}
        if "s" in body:
            rep = iq.DeficitReport(cname, order.errors[0], order.errors[0], 0.0, extra)
        else:
            rep = iq.DeficitReport(cname, lo, slope if math.isfinite(slope) else lo, 0.0,
                                   {**extra, "slope": None if order.exact else order.slope})
    elif checker == "transport":
        dens = _expr_callable(body["density"], P.dim)
        rep = pt.check_transport(P, dens, _rule(cfg, body, P), int(float(body.get("k", 64))))
    elif checker == "fixture":
        rep = iq.DeficitReport(cname, float(body["lhs"]), float(body["rhs"]), float(body.get("tol", 1e-6)), {})
    else:  # pragma: no cover - guarded by parse_config
        raise ConfigError([f"unknown checker {checker}"])

    meta.update(rep.metadata)
    meta["inequality"] = rep.name
    tol = float(body["tol"]) if "tol" in body and checker not in ("power_constant", "optimal_lambda",
                                                                   "psi_alpha", "min_A", "fixture") else rep.tol
    return iq.DeficitReport(cname, rep.lhs, rep.rhs, tol, meta)


def _outcome(cfg: ScenarioConfig, cname: str) -> dict:
    """Run one check and classify the result; never raises."""
    expect = cfg.checks[cname].get("expect", "inequality")
    try:
        rep = run_check(cfg, cname)
    except ScenarioSkipped as exc:
        return {"kind": "skipped", "name": cname, "reason": exc.reason}
    except Exception as exc:  # captured into the suite result
        msg = f"{type(exc).__name__}: {exc}"
        if expect == "error":
            return {"kind": "report", "report": iq.DeficitReport(
                cname, 0.0, 0.0, 0.0, {"checker": cfg.checks[cname]["checker"], "expected_error": msg}).to_dict()}
        return {"kind": "error", "name": cname, "error": msg}
    d = rep.to_dict()
    if expect == "error":
        return {"kind": "error", "name": cname, "error": "expected an error, checker succeeded"}
    if expect == "equality":
        d["metadata"]["equality_holds"] = bool(abs(d["deficit"]) <= d["tol"])
    return {"kind": "report", "report": d}


def _worker(args):
    text, base_dir, cname = args
    return _outcome(parse_config(text, base_dir), cname)


def run_suite(cfg: ScenarioConfig, jobs: int = 1) -> SuiteResult:
    """Execute every check in file order; reports keep that order for any ``jobs``."""
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    names = list(cfg.checks)
    if jobs > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outcomes = list(ex.map(_worker, [(cfg.text, cfg.base_dir, n) for n in names]))
    else:
        outcomes = [_outcome(cfg, n) for n in names]
    reports, skipped, errors, violations = [], [], [], []
    for out in outcomes:
        if out["kind"] == "skipped":
            skipped.append({"name": out["name"], "reason": out["reason"]})
        elif out["kind"] == "error":
            errors.append({"name": out["name"], "error": out["error"]})
        else:
            d = out["report"]
            reports.append(iq.DeficitReport.from_dict(d))
            if not d["pass"] or d["metadata"].get("equality_holds") is False:
                violations.append(d["name"])
    meta = {"config_hash": cfg.config_hash, "seed": cfg.seed, "tail_tol": cfg.tail_tol,
            "resolution": cfg.resolution, "checks_requested": len(names)}
    ts = {"started": started, "wall_seconds": time.perf_counter() - t0}
    return SuiteResult(cfg.name, reports, skipped, errors, violations, meta, ts)


def output_dir(cfg: Optional[ScenarioConfig]) -> Path:
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    if cfg is not None and cfg.output:
        return Path(cfg.base_dir) / cfg.output
    return Path("mlsi-output")


def write_result(result: SuiteResult, directory: Path) -> tuple:
    directory.mkdir(parents=True, exist_ok=True)
    jpath = directory / f"{result.name}.json"
    cpath = directory / f"{result.name}.csv"
    jpath.write_text(result.to_json())
    cpath.write_text(result.csv_summary())
    return jpath, cpath


def emit_curve(cfg: ScenarioConfig, param: str, ladder, check: Optional[str] = None) -> str:
    """CSV with columns parameter, lhs, rhs, deficit for each ladder value."""
    ladder = list(ladder)
    if not ladder:
        raise ValueError("empty ladder")
    candidates = [c for c, b in cfg.checks.items() if param in CHECKERS[b["checker"]][2]]
    if check is not None:
        if check not in cfg.checks:
            raise ValueError(f"unknown check {check!r}")
        if check not in candidates:
            raise ValueError(f"checker {cfg.checks[check]['checker']} does not sweep {param!r}")
        target = check
    elif candidates:
        target = candidates[0]
    else:
        raise ValueError(f"no check in the suite accepts the sweep parameter {param!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", "lhs", "rhs", "deficit"])
    for v in ladder:
        # a fixed reference value is meaningless along a sweep
        rep = run_check(cfg, target, {param: repr(float(v)), "expected": None})
        w.writerow([repr(float(v)), repr(rep.lhs), repr(rep.rhs), repr(rep.deficit)])
    return buf.getvalue()


def _print_table(data: dict, out) -> None:
    out.write(f"suite {data.get('suite')}: exit code {data.get('exit_code')}\n")
    for r in data["reports"]:
        out.write(f"  {'PASS' if r['pass'] else 'FAIL'}  {r['name']:<32} lhs={r['lhs']:.6g} "
                  f"rhs={r['rhs']:.6g} deficit={r['deficit']:.3g} tol={r['tol']:.2g}\n")
    for s in data.get("skipped", []):
        out.write(f"  SKIP  {s['name']:<32} {s['reason']}\n")
    for e in data.get("errors", []):
        out.write(f"  ERR   {e['name']:<32} {e['error']}\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mlsi-lab", description="Numerical checks of entropy inequalities.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a suite file")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--output", help="output directory (the environment variable takes precedence)")
    s = sub.add_parser("sweep", help="tabulate one check over a parameter ladder")
    s.add_argument("config")
    s.add_argument("param")
    s.add_argument("ladder", help="a,b,c | lo:hi:n | geom:lo:hi:n")
    s.add_argument("--check")
    rp = sub.add_parser("report", help="summarize a JSON result")
    rp.add_argument("json")
    rp.add_argument("--csv", action="store_true", help="emit the CSV summary instead of a table")
    args = ap.parse_args(argv)

    if args.cmd == "report":
        try:
            data = json.loads(Path(args.json).read_text())
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if args.csv:
            sys.stdout.write(reports_csv(data["reports"]))
        else:
            _print_table(data, sys.stdout)
        return int(data.get("exit_code", 0))

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.cmd == "run":
        result = run_suite(cfg, jobs=args.jobs)
        directory = Path(os.environ[OUTPUT_ENV]) if os.environ.get(OUTPUT_ENV) else (
            Path(args.output) if args.output else output_dir(cfg))
        jpath, cpath = write_result(result, directory)
        _print_table(result.to_dict(), sys.stdout)
        print(f"wrote {jpath} and {cpath}")
        return result.exit_code

    try:
        ladder = parse_ladder(args.ladder)
        table = emit_curve(cfg, args.param, ladder, args.check)
    except (ValueError, MLSIError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(table)
    directory = output_dir(cfg)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{cfg.name}-sweep-{args.param}.csv").write_text(table)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
