"""Command-line front end: `fraclap <command> ...`.

Exit codes: 0 all checks pass, 2 some check fails, 3 only inconclusive
results (quadrature did not converge), 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import harness, identities
from .domains import Ball, HalfSpace, Interval, DimensionMismatch
from .quadrature import (DuffySplit, GradedMesh, MonteCarlo, QuadratureError, QuadratureSpec,
                         energy_form)
from .specfun import DomainError, constants
from .trialfns import TrialFunction, family_from_dict, standard_suite

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


# ----------------------------------------------------------------- parsing

def _floats(text: str) -> List[float]:
    try:
        return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(p: argparse.ArgumentParser, domain=True, quad=True):
    g = p.add_argument_group("output")
    g.add_argument("--format", dest="format", choices=("json", "csv", "pretty"), default="json",
                   help="json (JSON-lines for reports), csv summary, or aligned pretty text")
    g.add_argument("--output", help="write to this file instead of stdout")
    g.add_argument("--workers", type=int, default=1, help="parallel workers for suites (default 1)")
    g.add_argument("--seed", type=int, default=None,
                   help="Monte Carlo seed (default: $FRACLAP_SEED or 0)")
    g.add_argument("--config", help="JSON or key=value file of defaults; explicit flags win")
    if domain:
        d = p.add_argument_group("domain")
        d.add_argument("--domain", choices=("interval", "ball"), default="interval",
                       help="interval (a, b) or ball B(0, radius) in R^dim")
        d.add_argument("--dim", type=int, default=None, help="dimension for balls (default 2)")
        d.add_argument("--radius", type=float, default=1.0, help="ball radius (default 1)")
        d.add_argument("--interval", type=_floats, default=None, metavar="A,B",
                       help="interval endpoints (default -1,1)")
    p.add_argument("--alpha", type=float, default=1.5, help="order alpha in (1, 2) (default 1.5)")
    if quad:
        q = p.add_argument_group("quadrature")
        q.add_argument("--grid", type=int, default=16, help="grid points per axis, >= 16 (default 16)")
        q.add_argument("--mode", choices=("graded", "duffy", "montecarlo"), default="graded",
                       help="singular quadrature mode (default graded)")
        q.add_argument("--q", type=float, default=3.0, help="grading exponent for --mode graded")
        q.add_argument("--samples", type=int, default=100_000, help="Monte Carlo samples")
        q.add_argument("--tol", type=float, default=1e-4, help="target relative tolerance")
        q.add_argument("--max-refinements", type=int, default=3, help="grid doublings allowed")
        q.add_argument("--pv-cutoff", type=float, default=1e-5,
                       help="Taylor-model radius for principal values")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fraclap", description=(
        "Regional fractional Laplacian on intervals, balls and half-spaces: constants, "
        "principal values, energy forms and inequality checks (Hardy, HSMball, HSMhalfspace)."))
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    sub.required = True

    c = sub.add_parser("constants", help="closed-form constants kappa, c1, c2, c3, 2* (Hardy, Lw1)")
    _common(c, domain=False, quad=False)
    c.add_argument("--dim", type=int, default=1, help="dimension n >= 1")

    lp = sub.add_parser("laplacian", help="-L w at a point: closed form (Lw1), PV quadrature, or bound")
    _common(lp)
    lp.add_argument("--point", type=_floats, required=True, help="comma-separated coordinates")
    lp.add_argument("--method", choices=("closed", "pv", "bound", "reduction"), default="pv",
                    help="closed = interval formula; pv = quadrature; bound = lower bound; "
                         "reduction = chord average (balls)")
    lp.add_argument("--variant", default="symmetric", help="closed-form variant: symmetric | as_printed")
    lp.add_argument("--bound", choices=("corrected", "printed"), default="corrected",
                    help="ball lower bound coefficient variant")

    e = sub.add_parser("energy", help="regional energy form of trial functions")
    _common(e)
    e.add_argument("--trial", action="append", default=[],
                   help='trial function as JSON, e.g. \'{"family":"polybump","center":[0],"rho":0.5,"p":2}\'')
    e.add_argument("--suite", choices=("standard",), help="use the standard suite")

    v = sub.add_parser("verify", help="inequality reports: hardy (Hardy), hsm-ball (HSMball), "
                                       "hsm-halfspace (HSMhalfspace)")
    _common(v)
    v.add_argument("inequality", choices=("hardy", "hsm-ball", "hsm-halfspace"))
    v.add_argument("--suite", choices=("standard",), default="standard")
    v.add_argument("--c-test", type=float, default=None,
                   help="Sobolev coefficient (default: half the suite estimate)")
    v.add_argument("--r-list", type=_floats, default=[4.0, 8.0, 16.0], help="half-space ball radii")
    v.add_argument("--height", type=float, default=1.0, help="half-space bump height")
    v.add_argument("--bump-radius", type=float, default=0.5, help="half-space bump radius")

    g = sub.add_parser("ground-state", help="energy = weighted energy + potential (hardyinball)")
    _common(g)
    g.add_argument("--suite", choices=("standard",), default="standard")
    g.add_argument("--potential", choices=("pv", "reduction"), default="pv",
                   help="how -L w / w is evaluated")

    s = sub.add_parser("sharpness", help="Rayleigh-quotient probe of the Hardy constant")
    _common(s, quad=False)
    s.add_argument("--mesh", type=int, default=256, help="cells in the piecewise-linear mesh (>= 32)")
    s.add_argument("--max-iter", type=int, default=2000)

    sw = sub.add_parser("sweep", help="Hardy reports over an (n, alpha) grid")
    _common(sw, domain=False)
    sw.add_argument("--dims", type=_floats, default=[1, 2, 3])
    sw.add_argument("--alphas", type=_floats, default=[1.2, 1.5, 1.8])

    a = sub.add_parser("adjudicate", help="verdicts on the closed form of -L w_1 (Lw1) and the dyadic constant")
    _common(a, domain=False, quad=False)
    return p


def _load_config(path: str) -> dict:
    try:
        text = open(path).read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}")
    try:
        cfg = json.loads(text)
        if not isinstance(cfg, dict):
            raise UsageError("JSON config must be an object")
    except json.JSONDecodeError:
        cfg = {}
        for ln, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{ln}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            cfg[k] = v
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = _load_config(known.config)
        # defaults go onto the subparser so explicit flags still win
        ns0, _ = parser.parse_known_args(argv)
        subp = parser._subparsers._group_actions[0].choices[ns0.command]
        coerced = {}
        for act in subp._actions:
            if act.dest in cfg:
                val = cfg[act.dest]
                if isinstance(val, str) and act.type is not None:
                    val = act.type(val)
                elif isinstance(val, list) and act.type is _floats:
                    val = [float(x) for x in val]
                coerced[act.dest] = val
        unknown = set(cfg) - {a.dest for a in subp._actions}
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        subp.set_defaults(**coerced)
    return parser.parse_args(argv)


# -------------------------------------------------------------- building

def _seed(ns) -> int:
    if ns.seed is not None:
        return ns.seed
    env = os.environ.get("FRACLAP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"FRACLAP_SEED must be an integer, got {env!r}")


def _spec(ns) -> QuadratureSpec:
    if ns.mode == "graded":
        mode = GradedMesh(ns.q)
    elif ns.mode == "duffy":
        mode = DuffySplit()
    else:
        mode = MonteCarlo(ns.samples, _seed(ns))
    return QuadratureSpec(grid_points_per_axis=ns.grid, pv_cutoff=ns.pv_cutoff, singular_mode=mode,
                          target_rel_tol=ns.tol, max_refinements=ns.max_refinements)


def _domain(ns, dim=None):
    if ns.domain == "interval":
        if (dim or ns.dim or 1) != 1:
            raise UsageError("--domain interval is one-dimensional")
        a, b = ns.interval or (-1.0, 1.0)
        return Interval(a, b)
    n = dim or ns.dim or 2
    return Ball((0.0,) * n, ns.radius)


def _check_alpha(alpha):
    if not 1.0 < alpha < 2.0:
        raise UsageError(f"--alpha must lie in (1, 2), got {alpha}")


# --------------------------------------------------------------- emission

def _pretty_rows(rows: List[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [[str(k) for k in keys]] + [[_fmt(r.get(k)) for k in keys] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(keys))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n" for row in cells)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return str(v)


def _flat(d: dict, prefix="") -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flat(v, f"{prefix}{k}."))
        else:
            out[f"{prefix}{k}"] = v
    return out


def emit_records(records: List[dict], fmt: str) -> str:
    if fmt == "json":
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    flat = [_flat(r) for r in records]
    keys = list(dict.fromkeys(k for r in flat for k in r))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in flat:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()
    return _pretty_rows([{k: r.get(k, "") for k in keys} for r in flat])


def emit_reports(reports, fmt: str) -> str:
    if fmt == "json":
        return harness.to_json_lines(reports)
    if fmt == "csv":
        return harness.to_csv(reports)
    return _pretty_rows([{"trial": r.trial, "inequality": r.inequality.value,
                          "slack": r.slack, "rel_slack": r.rel_slack, "status": r.status}
                         for r in reports])


def _write(ns, text: str):
    if ns.output:
        with open(ns.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------- commands

def cmd_constants(ns) -> int:
    _check_alpha(ns.alpha)
    if ns.dim < 1:
        raise UsageError("--dim must be >= 1")
    _write(ns, emit_records([constants(ns.dim, ns.alpha).to_dict()], ns.format))
    return EXIT_OK


def cmd_laplacian(ns) -> int:
    _check_alpha(ns.alpha)
    D = _domain(ns, dim=len(ns.point) if ns.domain == "ball" else None)
    x = np.asarray(ns.point, dtype=float)
    if x.size != D.dim:
        raise UsageError(f"--point has {x.size} coordinates, domain has dimension {D.dim}")
    scale = D.inradius
    centre = np.asarray(D.center)
    xi = (x - centre) / scale
    if np.sum(xi * xi) >= 1:
        raise UsageError("--point must lie inside the domain")
    rec = {"method": ns.method, "point": [float(v) for v in x], "alpha": ns.alpha, "domain": D.to_dict()}
    # everything is -L w for the reference weight of D; unit-ball formulas rescale by R^-alpha
    if ns.method == "closed":
        if D.dim != 1:
            raise UsageError("--method closed is the interval formula; use --domain interval")
        rec["value"] = identities.w1_laplacian_closed(float(xi[0]), ns.alpha, identities.W1FormulaVariant.parse(ns.variant)) * scale ** -ns.alpha
        rec["variant"] = identities.W1FormulaVariant.parse(ns.variant).value
    elif ns.method == "bound":
        rec["value"] = identities.ball_laplacian_lower_bound(xi, D.dim, ns.alpha, ns.bound) * scale ** -ns.alpha
        rec["bound"] = ns.bound
    elif ns.method == "reduction":
        rec["value"] = identities.ball_laplacian_reduced(xi, D.dim, ns.alpha) * scale ** -ns.alpha
    else:
        from .quadrature import regional_laplacian
        from .trialfns import Constant, WeightedProfile
        w = TrialFunction(WeightedProfile(Constant(1.0), ns.alpha), D, "w")
        fv = regional_laplacian(D, w, x, _spec(ns), ns.alpha)
        rec.update({"value": -fv.value, "est_error": fv.est_error, "quadrature": fv.method})
    _write(ns, emit_records([rec], ns.format))
    return EXIT_OK


def _trials(ns, D) -> List[TrialFunction]:
    out = []
    for i, t in enumerate(ns.trial):
        try:
            fam = family_from_dict(json.loads(t))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"bad --trial {t!r}: {exc}")
        out.append(TrialFunction(fam, D, json.loads(t).get("label", f"trial{i}")))
    if ns.suite == "standard":
        out.extend(standard_suite(D, ns.alpha))
    if not out:
        raise UsageError("give --trial JSON or --suite standard")
    return out


def cmd_energy(ns) -> int:
    _check_alpha(ns.alpha)
    D = _domain(ns)
    spec = _spec(ns)
    trials = _trials(ns, D)
    status = [EXIT_OK]

    def one(u):
        try:
            fv = energy_form(D, u, spec, ns.alpha)
            return {"trial": u.label, **fv.to_dict()}
        except QuadratureError as exc:
            status.append(EXIT_INCONCLUSIVE)
            return {"trial": u.label, "error": f"{type(exc).__name__}: {exc}"}

    recs = harness.ordered_map(one, trials, ns.workers)
    _write(ns, emit_records(recs, ns.format))
    return max(status)


def cmd_verify(ns) -> int:
    _check_alpha(ns.alpha)
    spec = _spec(ns)
    if ns.inequality == "hardy":
        D = _domain(ns)
        reports = harness.run_hardy_suite(D, ns.alpha, spec, workers=ns.workers)
    elif ns.inequality == "hsm-ball":
        if ns.domain != "ball":
            raise UsageError("hsm-ball needs --domain ball")
        n = ns.dim or 2
        if not ns.alpha < n or n < 2:
            raise UsageError("hsm-ball needs dim >= 2 and alpha < dim")
        B1 = Ball((0.0,) * n, 1.0)
        suite = standard_suite(B1, ns.alpha)
        c_test = ns.c_test
        if c_test is None:
            c_test = 0.5 * harness.estimate_admissible_c(B1, n, ns.alpha, suite, spec, ns.workers)
        Br = Ball((0.0,) * n, ns.radius)
        reports = harness.ordered_map(
            lambda u: harness.verify_hsm_ball(ns.radius, n, u.scaled(ns.radius, Br), ns.alpha, c_test, spec),
            suite, ns.workers)
    else:
        n = ns.dim or 2
        H = HalfSpace(n)
        from .trialfns import PolyBump
        centre = (0.0,) * (n - 1) + (ns.height,)
        u = TrialFunction(PolyBump(centre, ns.bump_radius, 2), H, "bump")
        c_test = ns.c_test
        if c_test is None:
            B1 = Ball((0.0,) * n, 1.0)
            c_test = 0.5 * harness.estimate_admissible_c(B1, n, ns.alpha, standard_suite(B1, ns.alpha),
                                                         spec, ns.workers)
        reports, summary = harness.verify_hsm_halfspace(u, ns.alpha, ns.r_list, spec, c_test)
        if ns.format == "pretty":
            sys.stderr.write(json.dumps(summary.to_dict(), sort_keys=True) + "\n")
    _write(ns, emit_reports(reports, ns.format))
    return harness.exit_code(reports)


def cmd_ground_state(ns) -> int:
    _check_alpha(ns.alpha)
    D = _domain(ns)
    spec = _spec(ns)
    status = [EXIT_OK]

    def one(u):
        try:
            gs = identities.ground_state_terms(u, ns.alpha, spec, ns.potential)
        except QuadratureError as exc:
            status.append(EXIT_INCONCLUSIVE)
            return {"trial": u.label, "error": f"{type(exc).__name__}: {exc}"}
        full = gs.full_energy.value
        ok = abs(gs.residual) <= max(2e-2 * abs(full), 3 * gs.error_budget + 1e-9)
        if not ok:
            status.append(EXIT_FAIL)
        return {"trial": u.label, **gs.to_dict(), "pass": ok}

    recs = harness.ordered_map(one, standard_suite(D, ns.alpha), ns.workers)
    _write(ns, emit_records(recs, ns.format))
    return max(status)


def cmd_sharpness(ns) -> int:
    _check_alpha(ns.alpha)
    D = _domain(ns)
    if ns.mesh < 32:
        raise UsageError("--mesh must be >= 32")
    res = harness.sharpness_probe(D, ns.alpha, ns.mesh, {"max_iter": ns.max_iter})
    _write(ns, emit_records([res.to_dict()], ns.format))
    return EXIT_OK if res.converged else EXIT_INCONCLUSIVE


def cmd_sweep(ns) -> int:
    spec = _spec(ns)
    reports = []
    for n in ns.dims:
        n = int(n)
        if n not in (1, 2, 3):
            raise UsageError("--dims entries must be 1, 2 or 3")
        for a in ns.alphas:
            _check_alpha(a)
            D = Interval(-1.0, 1.0) if n == 1 else Ball((0.0,) * n, 1.0)
            reports.extend(harness.run_hardy_suite(D, a, spec, workers=ns.workers))
    _write(ns, emit_reports(reports, ns.format))
    return harness.exit_code(reports)


def _uniform_disk(rng, m):
    r = np.sqrt(rng.random(m))
    t = 2 * np.pi * rng.random(m)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def cmd_adjudicate(ns) -> int:
    adj = identities.adjudicate_w1()
    recs = [{"question": "w1 closed form", "verdict": adj.winner.value if adj.winner else "none",
             "symmetric_max_rel_error": adj.max_rel_error[identities.W1FormulaVariant.SYMMETRIC],
             "as_printed_max_rel_error": adj.max_rel_error[identities.W1FormulaVariant.AS_PRINTED]}]
    rng = np.random.default_rng(_seed(ns))
    ok = True
    for a in (1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9):
        c = identities.dyadic_coefficients(a)
        X, Y = _uniform_disk(rng, 10_000), _uniform_disk(rng, 10_000)
        b = identities.dyadic_bounds_many(X, Y, a)
        dominated = bool(np.all(b["bound_corrected"] <= b["weight_product"]))
        corrected_ok = c["corrected"] <= c["first_display"] and dominated
        ok = ok and corrected_ok
        recs.append({"question": f"dyadic constant alpha={a}",
                     "verdict": "corrected" if corrected_ok else "none",
                     "first_display": c["first_display"], "follow_up_printed": c["follow_up_printed"],
                     "corrected": c["corrected"],
                     "follow_up_printed_valid": c["follow_up_printed"] <= c["first_display"],
                     "corrected_dominated": dominated})
    _write(ns, emit_records(recs, ns.format))
    return EXIT_OK if adj.winner and ok else EXIT_FAIL


COMMANDS = {"constants": cmd_constants, "laplacian": cmd_laplacian, "energy": cmd_energy,
            "verify": cmd_verify, "ground-state": cmd_ground_state, "sharpness": cmd_sharpness,
            "sweep": cmd_sweep, "adjudicate": cmd_adjudicate}


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parse_args(argv)
        return COMMANDS[ns.command](ns)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, DomainError, DimensionMismatch, ValueError, argparse.ArgumentTypeError) as exc:
        sys.stderr.write(f"fraclap: error: {exc}\n")
        return EXIT_USAGE
    except QuadratureError as exc:
        sys.stderr.write(f"fraclap: inconclusive: {type(exc).__name__}: {exc}\n")
        return EXIT_INCONCLUSIVE


def main() -> None:
    sys.exit(run())
