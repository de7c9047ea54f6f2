"""Command-line entry point.

Usage:
    hspw-lab norm --domain '{"type":"interval","lo":0,"hi":1}' --field poly:t*(1-t) --alpha 1 --p 1
    hspw-lab hspw-verify --domain '{"type":"interval","lo":0,"hi":1}' --field poly:t*(1-t) --p 2
    hspw-lab gls-norm --domain ... --field bubble:2 --alpha 0.5 --psi power:2 --theorem
    hspw-lab sharpness --budget 500 --seed 0
    hspw-lab dilation --domain '{"type":"halfspace_product",...}' --p 2 --q 2 --a 0 --h 0 --probe
    hspw-lab exponents --n 3 --p 2 --a 0 --h 0 --solve q
    hspw-lab report --input run1.json run2.json --out-csv table.csv

Exit codes: 0 success or pass, 2 an inequality check failed, 3 divergence,
1 usage error, 4 the quadrature could not reach its tolerance.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .calculus import apply_hardy_operator, gradient_magnitude, sobolev_norm, weighted_lp_norm
from .dilation import ExponentConfig, exponent_relation, necessity_probe, verify_scaling_laws
from .domain import HalfSpaceProduct, domain_from_json, domain_to_json
from .errors import (
    GlsDivergent,
    HspwLabError,
    NoConvergence,
    NoSolution,
    RhsDivergent,
    UsageError,
)
from .fields import field_from_spec
from .grand_lebesgue import (
    check_gls_hardy,
    gls_norm,
    hardy_lhs_norms,
    hardy_rhs_norms,
    make_pgrid,
    psi_from_spec,
)
from .hspw import half_line_domain, power_family, sharpness_search, verify_hspw
from .parallel import ordered_map
from .quadrature import QuadratureConfig
from .report import SCHEMA_ID, dumps_report, emit_sweep_table, validate_report

COMMANDS = ("norm", "gls-norm", "hspw-verify", "sharpness", "dilation", "exponents", "report")

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_DIVERGENT, EXIT_NUMERICAL = 0, 1, 2, 3, 4

# option name -> default; every resolved value is echoed into the report
DEFAULTS = {
    "domain": None,
    "field": "bump",
    "alpha": 0.0,
    "p": None,
    "of": "u",
    "sobolev_convention": "literal",
    "psi": None,
    "theorem": False,
    "p_count": 8,
    "p_max_cap": 64.0,
    "endpoint_refinement": 0,
    "refine": True,
    "budget": 500,
    "restarts": 5,
    "seed": 0,
    "beta_range": [0.52, 1.5],
    "cutoff_range": [2.0, 64.0],
    "n": None,
    "q": None,
    "a": None,
    "h": None,
    "solve": None,
    "lambdas": None,
    "probe": False,
    "input": None,
    "out_json": None,
    "out_csv": None,
}

QUAD_KEYS = ("base_order", "grading_ratio", "max_depth", "rel_tol", "abs_tol",
             "divergence_growth_threshold", "divergence_window", "max_refinements")


@dataclass
class ExperimentConfig:
    command: str
    options: dict
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)

    def __getattr__(self, name):
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None

    def echo(self) -> dict:
        out = {k: v for k, v in self.options.items() if k not in ("out_json", "out_csv")}
        out["quadrature"] = self.quadrature.to_dict()
        return out


# -- argument parsing ---------------------------------------------------------

def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hspw-lab",
                                     description="Weighted Hardy inequality and dilation experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--config", help="JSON file with any of the options below")
        sp.add_argument("--out-json", dest="out_json", default=None)
        sp.add_argument("--out-csv", dest="out_csv", default=None)
        sp.add_argument("--seed", type=int, default=None)
        q = sp.add_argument_group("quadrature")
        q.add_argument("--base-order", dest="base_order", type=int, default=None)
        q.add_argument("--grading-ratio", dest="grading_ratio", type=float, default=None)
        q.add_argument("--max-depth", dest="max_depth", type=int, default=None)
        q.add_argument("--rel-tol", dest="rel_tol", type=float, default=None)
        q.add_argument("--abs-tol", dest="abs_tol", type=float, default=None)
        q.add_argument("--max-refinements", dest="max_refinements", type=int, default=None)

    def problem(sp, p_multi=True):
        sp.add_argument("--domain", default=None, help="domain JSON, or a path to a JSON file")
        sp.add_argument("--field", default=None,
                        help="zero, bump, poly:<expr>, power:beta[,M], distance, bubble[:k], productbump")
        sp.add_argument("--alpha", type=float, default=None)
        if p_multi:
            sp.add_argument("--p", type=float, action="append", default=None,
                            help="exponent; repeat for a sweep")

    sp = sub.add_parser("norm", help="weighted L_p norm of u, |grad u|, T[u], or the Sobolev norm")
    common(sp)
    problem(sp)
    sp.add_argument("--of", choices=["u", "grad", "hardy", "sobolev"], default=None)
    sp.add_argument("--sobolev-convention", dest="sobolev_convention",
                    choices=["literal", "standard"], default=None)

    sp = sub.add_parser("gls-norm", help="Grand Lebesgue norm, optionally the two-sided inequality")
    common(sp)
    problem(sp, p_multi=False)
    sp.add_argument("--of", choices=["u", "grad", "hardy"], default=None)
    sp.add_argument("--psi", action="append", default=None,
                    help="power:m, logcorr:m,beta, extremal:r, natural, table:file.csv (repeatable)")
    sp.add_argument("--theorem", action="store_true", default=None,
                    help="compare ||T u|| in G(K psi) with ||grad u|| in G(psi)")
    sp.add_argument("--p-count", dest="p_count", type=int, default=None)
    sp.add_argument("--p-max-cap", dest="p_max_cap", type=float, default=None)
    sp.add_argument("--endpoint-refinement", dest="endpoint_refinement", type=int, default=None)
    sp.add_argument("--no-refine", dest="refine", action="store_false", default=None)

    sp = sub.add_parser("hspw-verify", help="both sides of the Hardy inequality against K(p)")
    common(sp)
    problem(sp)

    sp = sub.add_parser("sharpness", help="search the power family for near-extremal ratios")
    common(sp)
    problem(sp)
    sp.add_argument("--budget", type=int, default=None)
    sp.add_argument("--restarts", type=int, default=None)
    sp.add_argument("--beta-range", dest="beta_range", type=_float_list, default=None)
    sp.add_argument("--cutoff-range", dest="cutoff_range", type=_float_list, default=None)

    sp = sub.add_parser("dilation", help="scaling of L_a and R_h under u -> u(lam x)")
    common(sp)
    sp.add_argument("--domain", default=None)
    sp.add_argument("--field", default=None)
    for k in ("p", "q", "a", "h"):
        sp.add_argument(f"--{k}", type=float, default=None)
    sp.add_argument("--lambdas", type=_float_list, default=None)
    sp.add_argument("--probe", action="store_true", default=None)

    sp = sub.add_parser("exponents", help="residual of (a-n)/q = 1 + (h-n)/p, or solve it")
    common(sp)
    sp.add_argument("--n", type=int, default=None)
    for k in ("p", "q", "a", "h"):
        sp.add_argument(f"--{k}", type=float, default=None)
    sp.add_argument("--solve", choices=["a", "h", "p", "q"], default=None)

    sp = sub.add_parser("report", help="validate JSON reports and merge their rows into one CSV")
    common(sp)
    sp.add_argument("--input", nargs="+", default=None)
    return parser


def _load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError("config", f"{path} is not valid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError("config", "top level must be an object")
    return doc


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, the ``--config`` file and explicit flags (in that order)."""
    file_doc = _load_config_file(args.config) if getattr(args, "config", None) else {}
    command = args.command or file_doc.get("command")
    if command not in COMMANDS:
        raise UsageError("command", f"expected one of {', '.join(COMMANDS)}")
    if "command" in file_doc and args.command and file_doc["command"] != args.command:
        raise UsageError("config.command", f"file says {file_doc['command']!r}, command line says {args.command!r}")
    quad_doc = dict(file_doc.get("quadrature", {}))
    opts = dict(DEFAULTS)
    for k, v in file_doc.items():
        if k in ("command", "quadrature"):
            continue
        key = k.replace("-", "_")
        if key in QUAD_KEYS:
            quad_doc[key] = v
        elif key in opts:
            opts[key] = v
        else:
            raise UsageError(f"config.{k}", "unknown option")
    for k, v in vars(args).items():
        if v is None or k in ("command", "config"):
            continue
        if k in QUAD_KEYS:
            quad_doc[k] = v
        else:
            opts[k] = v
    unknown = set(quad_doc) - set(QuadratureConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"quadrature.{sorted(unknown)[0]}", "unknown quadrature option")
    try:
        qcfg = QuadratureConfig(**quad_doc)
    except (TypeError, ValueError) as exc:
        raise UsageError("quadrature", str(exc)) from None
    if isinstance(opts.get("p"), (int, float)):
        opts["p"] = [float(opts["p"])]
    if isinstance(opts.get("psi"), str):
        opts["psi"] = [opts["psi"]]
    if isinstance(opts.get("input"), str):
        opts["input"] = [opts["input"]]
    if not isinstance(opts["seed"], int):
        raise UsageError("seed", "must be an integer")
    return ExperimentConfig(command, opts, qcfg)


def _parse_domain(spec, default=None):
    if spec is None:
        if default is None:
            raise UsageError("domain", "required")
        return default
    if isinstance(spec, dict):
        doc = spec
    else:
        text = str(spec).strip()
        if not text.startswith("{"):
            try:
                text = Path(text).read_text()
            except OSError as exc:
                raise UsageError("domain", f"cannot read {spec}: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError("domain", f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError("domain", "must be a JSON object")
    try:
        return domain_from_json(doc)
    except KeyError as exc:
        raise UsageError(f"domain.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError, HspwLabError) as exc:
        raise UsageError(f"domain.{doc.get('type', 'type')}", str(exc)) from None


def _parse_field(spec, dom):
    try:
        return field_from_spec(spec, dom)
    except (ValueError, TypeError) as exc:
        raise UsageError("field", str(exc)) from None


def _require(cfg, *names):
    for name in names:
        if cfg.options.get(name) is None:
            raise UsageError(name, "required for this command")


# -- commands -------------------------------------------------------------------

def _status(exit_code, checks=False):
    if exit_code == EXIT_OK:
        return "pass" if checks else "ok"
    return {EXIT_FAIL: "fail", EXIT_DIVERGENT: "divergent"}[exit_code]


def cmd_norm(cfg: ExperimentConfig):
    _require(cfg, "p")
    dom = _parse_domain(cfg.domain)
    u = _parse_field(cfg.field, dom)
    cfg.options["domain"] = domain_to_json(dom)
    q = cfg.quadrature
    rows, norms = [], []
    for p in cfg.p:
        if cfg.of == "sobolev":
            v = sobolev_norm(u, dom, p, q, convention=cfg.sobolev_convention)
            nv = {"value": v if math.isfinite(v) else None, "p": p, "alpha": 0.0,
                  "error_estimate": None, "divergent_flag": not math.isfinite(v)}
        else:
            target = {"u": u, "grad": gradient_magnitude(u, dom), "hardy": apply_hardy_operator(u, dom)}[cfg.of]
            nv = weighted_lp_norm(target, dom, cfg.alpha, p, q).to_dict()
        norms.append(nv)
        rows.append({"p": p, "alpha": nv["alpha"], "value": nv["value"],
                     "error_estimate": nv["error_estimate"], "divergent": nv["divergent_flag"]})
    code = EXIT_DIVERGENT if any(r["divergent"] for r in rows) else EXIT_OK
    return code, {"norms": norms}, rows


def cmd_hspw_verify(cfg: ExperimentConfig):
    _require(cfg, "p")
    dom = _parse_domain(cfg.domain)
    u = _parse_field(cfg.field, dom)
    cfg.options["domain"] = domain_to_json(dom)
    reps = ordered_map(lambda p: verify_hspw(u, dom, cfg.alpha, p, cfg.quadrature, label=cfg.field), cfg.p)
    code = EXIT_OK if all(r.passed for r in reps) else EXIT_FAIL
    if any(r.lhs.divergent_flag for r in reps):
        code = EXIT_DIVERGENT
    return code, {"hspw": [r.to_dict() for r in reps]}, reps


def cmd_gls(cfg: ExperimentConfig):
    _require(cfg, "psi")
    dom = _parse_domain(cfg.domain)
    u = _parse_field(cfg.field, dom)
    cfg.options["domain"] = domain_to_json(dom)
    n, alpha, q = dom.n, cfg.alpha, cfg.quadrature
    lower = n - alpha
    try:
        grid = make_pgrid(lower, math.inf, cfg.p_count, cfg.p_max_cap, cfg.endpoint_refinement)
    except HspwLabError as exc:
        raise UsageError("p_count", str(exc)) from None
    lhs_norms = hardy_lhs_norms(u, dom, alpha, q)
    rhs_norms = hardy_rhs_norms(u, dom, alpha, q)
    psis = []
    for i, spec in enumerate(cfg.psi):
        try:
            psis.append(psi_from_spec(spec, lower, math.inf, u=u, dom=dom, alpha=alpha, cfg=q,
                                      norms=rhs_norms))
        except (ValueError, OSError) as exc:
            raise UsageError(f"psi[{i}]", str(exc)) from None
    rows, out = [], {"grid": list(grid.points)}
    if cfg.theorem:
        reports = []
        for spec, psi in zip(cfg.psi, psis):
            rep = check_gls_hardy(u, dom, alpha, psi, grid, q, refine=cfg.refine,
                                  lhs_norms=lhs_norms, rhs_norms=rhs_norms)
            reports.append(rep.to_dict())
            for row in rep.certificate:
                rows.append({"psi": spec, "p": row["p"], "lhs_norm": row["lhs_norm"],
                             "rhs_norm": row["rhs_norm"], "psi_value": row["psi"], "psi_K": row["psi_K"],
                             "lhs_ratio": row["lhs_ratio"], "rhs_ratio": row["rhs_ratio"], "pass": row["pass"]})
        out["theorem"] = reports
        code = EXIT_OK if all(r["pass"] for r in reports) else EXIT_FAIL
    else:
        target = {"u": u, "grad": gradient_magnitude(u, dom), "hardy": apply_hardy_operator(u, dom)}[cfg.of]
        shared = {"u": None, "grad": rhs_norms, "hardy": lhs_norms}[cfg.of]
        results = []
        for spec, psi in zip(cfg.psi, psis):
            res = gls_norm(target, dom, alpha, psi, grid, q, refine=cfg.refine, norms=shared)
            results.append({"psi": psi.describe(), **res.to_dict()})
            for row in res.table:
                rows.append({"psi": spec, "p": row["p"], "norm": row["norm"], "psi_value": row["psi"],
                             "ratio": row["ratio"]})
        out["gls"] = results
        code = EXIT_OK
    return code, out, rows


def cmd_sharpness(cfg: ExperimentConfig):
    p_list = cfg.p or [2.0]
    if len(p_list) != 1:
        raise UsageError("p", "sharpness takes a single exponent")
    br, cr = cfg.beta_range, cfg.cutoff_range
    if len(br) != 2 or len(cr) != 2:
        raise UsageError("beta_range", "ranges are lo,hi pairs")
    dom = _parse_domain(cfg.domain, default=half_line_domain(cr[1]))
    cfg.options["domain"] = domain_to_json(dom)
    cfg.options["p"] = p_list
    fam = power_family(dom, tuple(br), tuple(cr))
    res = sharpness_search(fam, dom, cfg.alpha, p_list[0], cfg.quadrature, search_budget=cfg.budget,
                           restarts=cfg.restarts, seed=cfg.seed)
    rows = [{"evaluation": i, "beta": float(x[0]), "cutoff": float(x[1]),
             "ratio": r if math.isfinite(r) else None}
            for i, (x, r) in enumerate(res.history)]
    out = res.to_dict()
    out["family"] = fam.description
    return EXIT_OK, {"sharpness": out}, rows


def _exponents(cfg, n, d=None, r=None):
    try:
        return ExponentConfig(p=cfg.p[0] if isinstance(cfg.p, list) else cfg.p, q=cfg.q, a=cfg.a, h=cfg.h,
                              n=n, d=d, r=r)
    except ValueError as exc:
        raise UsageError("exponents", str(exc)) from None


def cmd_dilation(cfg: ExperimentConfig):
    _require(cfg, "p", "q", "a", "h")
    dom = _parse_domain(cfg.domain)
    if not isinstance(dom, HalfSpaceProduct):
        raise UsageError("domain.type", "dilation needs halfspace_product")
    cfg.options["domain"] = domain_to_json(dom)
    field_spec = cfg.field if cfg.field != "bump" else "productbump"
    cfg.options["field"] = field_spec
    u = _parse_field(field_spec, dom)
    e = _exponents(cfg, dom.n, dom.d, dom.r)
    rep = verify_scaling_laws(u, dom, e, cfg.lambdas, cfg.quadrature)
    out = {"scaling": rep.to_dict()}
    rows = [{"lambda": lam, "L": L, "R": R, "ratio": L / R if R > 0 else None}
            for lam, L, R in zip(rep.lambdas, rep.L_values, rep.R_values)]
    if cfg.probe:
        out["probe"] = necessity_probe(u, dom, e, cfg.lambdas, cfg.quadrature).to_dict()
    code = EXIT_OK if rep.pointwise_pass else EXIT_FAIL
    return code, out, rows


def cmd_exponents(cfg: ExperimentConfig):
    _require(cfg, "n")
    p = cfg.p[0] if isinstance(cfg.p, list) else cfg.p
    cfg.options["p"] = p
    try:
        e = ExponentConfig(p=p, q=cfg.q, a=cfg.a, h=cfg.h, n=int(cfg.n))
    except ValueError as exc:
        raise UsageError("exponents", str(exc)) from None
    try:
        rel = exponent_relation(e, cfg.solve)
    except ValueError as exc:
        raise UsageError("solve", str(exc)) from None
    row = dict(rel.config.to_dict())
    row.update({"residual": rel.residual, "solve_for": rel.solve_for, "value": rel.value})
    return EXIT_OK, {"relation": rel.to_dict()}, [row]


def cmd_report(cfg: ExperimentConfig):
    _require(cfg, "input")
    import jsonschema

    summaries, rows = [], []
    worst = EXIT_OK
    for i, path in enumerate(cfg.input):
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"input[{i}]", f"cannot load {path}: {exc}") from None
        try:
            validate_report(doc)
        except jsonschema.ValidationError as exc:
            loc = ".".join(str(x) for x in exc.absolute_path) or "(root)"
            raise UsageError(f"input[{i}].{loc}", exc.message) from None
        summaries.append({"path": str(path), "command": doc["command"], "status": doc["status"],
                          "exit_code": doc["exit_code"]})
        worst = max(worst, doc["exit_code"])
        for h in doc["result"].get("hspw", []):
            rows.append({"source": str(path), "p": h["p"], "alpha": h["alpha"], "n": h["n"],
                         "lhs": h["lhs"]["value"], "rhs": h["rhs"]["value"], "K": h["K"],
                         "ratio": h["ratio"], "slack": h["slack"], "pass": h["pass"]})
    return worst, {"reports": summaries}, rows


HANDLERS = {
    "norm": cmd_norm,
    "gls-norm": cmd_gls,
    "hspw-verify": cmd_hspw_verify,
    "sharpness": cmd_sharpness,
    "dilation": cmd_dilation,
    "exponents": cmd_exponents,
    "report": cmd_report,
}

CSV_COLUMNS = {
    "hspw-verify": ["p", "alpha", "n", "lhs", "rhs", "K", "ratio", "slack", "pass"],
    "report": ["source", "p", "alpha", "n", "lhs", "rhs", "K", "ratio", "slack", "pass"],
}
CSV_SORT = {"sharpness": "evaluation", "dilation": "lambda", "exponents": None}


def run(cfg: ExperimentConfig):
    """Execute one experiment; returns ``(exit_code, report_dict, csv_rows)``."""
    code, result, rows = HANDLERS[cfg.command](cfg)
    report = {
        "schema": SCHEMA_ID,
        "version": __version__,
        "command": cfg.command,
        "config": cfg.echo(),
        "status": _status(code, checks=cfg.command in ("hspw-verify", "dilation") or
                          (cfg.command == "gls-norm" and bool(cfg.theorem))),
        "exit_code": code,
        "result": result,
    }
    return code, report, rows


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.command is None and not getattr(args, "config", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve_config(args)
        code, report, rows = run(cfg)
    except UsageError as exc:
        print(f"hspw-lab: usage error at {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GlsDivergent, RhsDivergent) as exc:
        print(f"hspw-lab: divergent: {exc}", file=sys.stderr)
        return EXIT_DIVERGENT
    except NoSolution as exc:
        print(f"hspw-lab: usage error at solve: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoConvergence as exc:
        print(f"hspw-lab: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HspwLabError as exc:
        print(f"hspw-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = dumps_report(report)
    try:
        if cfg.out_json:
            Path(cfg.out_json).write_text(text)
        else:
            sys.stdout.write(text)
        if cfg.out_csv:
            if not rows:
                print("hspw-lab: nothing to tabulate; CSV not written", file=sys.stderr)
            else:
                sort_key = CSV_SORT.get(cfg.command, "p")
                emit_sweep_table(rows, cfg.out_csv, CSV_COLUMNS.get(cfg.command), sort_key=sort_key)
    except OSError as exc:
        print(f"hspw-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
