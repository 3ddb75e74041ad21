"""Command-line front end: ``lgspan <command> [options]``.

Exit codes: 0 success, 2 validation error, 3 budget exceeded, 4 verification
failure.  JSON reports are written with sorted keys so identical
configurations give byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction

import jsonschema

from . import __version__, catalog, symcalc
from .errors import (
    BudgetExceededError,
    DimensionCapError,
    GraphDoesNotComputeError,
    LGSpanError,
    MisclassifiedInputError,
    SymmetryError,
    UnboundedError,
    ValidationError,
)
from .lgraph import (
    DEFAULT_BRUTE_FORCE_BUDGET,
    FunctionOracle,
    LGraph,
    accepting_vertices,
    graph_complexity,
    neg_complexity,
    optimal_flow,
)
from .span import (
    DEFAULT_DIM_CAP,
    compile_boolean,
    encode_oracle,
    evaluate,
    multiplexor_expand,
    negative_witness,
    positive_witness,
    span_dimension,
)
from .stages import DEFAULT_GROUP_BUDGET, orbit_partition, orbits_csv

EXIT_OK, EXIT_VALIDATION, EXIT_BUDGET, EXIT_VERIFY = 0, 2, 3, 4
DEFAULT_TOL = 1e-6

GRAPH_FILE_SCHEMA = {
    "type": "object",
    "required": ["graph", "function"],
    "properties": {
        "graph": {
            "type": "object",
            "required": ["n", "m", "vertices", "arcs"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 2},
                "vertices": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["loaded"],
                        "properties": {
                            "loaded": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                            "label": {"type": ["string", "null"]},
                        },
                    },
                },
                "arcs": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["from", "to", "weight"],
                        "properties": {
                            "from": {"type": "integer", "minimum": 0},
                            "to": {"type": "integer", "minimum": 0},
                            "loads": {"type": "integer", "minimum": 0},
                            "weight": {"type": "number", "exclusiveMinimum": 0},
                        },
                    },
                },
            },
        },
        "function": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["or", "distinctness", "triangle", "table"]},
                "promised_ones": {"type": "integer", "minimum": 1},
                "ones": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
            },
        },
    },
}

TABLE_FILE_SCHEMA = {
    "type": ["object", "array"],
    "properties": {
        "terms": {"type": "array", "minItems": 1},
        "specialities": {"type": "array", "minItems": 1},
        "lengths": {"type": "array", "minItems": 1},
        "labels": {"type": "array", "items": {"type": "string"}},
        "bounds": {"type": "object"},
    },
}

CATALOG = {
    "or": "OR on n bits; --r promised number of ones (default 1)",
    "distinctness": "element distinctness on n items over alphabet --m; --r loaded-set size",
    "triangle-new": "improved triangle construction, explicit for n <= 7; --r, --s (0 < s < 1)",
    "triangle-old": "stage table only (optimize); --r, --l exponents",
}


# -- helpers -------------------------------------------------------------------------


def _fraction(text: str | None) -> Fraction | None:
    if text is None:
        return None
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"{text!r} is not a rational number") from None


def _int(text: str | None, name: str, default: int | None = None) -> int:
    if text is None:
        if default is None:
            raise ValidationError(f"--{name} is required")
        return default
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"--{name} must be an integer, got {text!r}") from None


def _load_json(path: str, schema: dict):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    errors = sorted(jsonschema.Draft7Validator(schema).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ValidationError(f"{path}: at {where}: {err.message}")
    return doc


def _config(args) -> dict:
    keys = ("command", "catalog", "n", "r", "l", "s", "m", "graph", "table", "stage",
            "tol", "budget", "dim_cap", "format")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _emit(args, result: dict, text: str | None = None) -> None:
    if args.format == "json" or text is None:
        doc = {"tool": "lgspan", "version": __version__, "config": _config(args), "result": result}
        text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _check_budget(n: int, m: int, budget: int) -> None:
    if m**n > budget:
        raise BudgetExceededError("oracle enumeration m^n", m**n, budget)


def _instance(args) -> tuple[LGraph, FunctionOracle, dict]:
    """Learning graph and function from ``--graph`` or ``--catalog``."""
    budget = args.budget
    if args.graph:
        doc = _load_json(args.graph, GRAPH_FILE_SCHEMA)
        try:
            g = LGraph.from_json(doc["graph"])
        except ValidationError as exc:
            raise ValidationError(f"{args.graph}: at graph: {exc}") from None
        fdoc = doc["function"]
        kind = fdoc["kind"]
        _check_budget(g.n, g.m, budget)
        if kind == "or":
            f = catalog.or_oracle(g.n, fdoc.get("promised_ones", 1))
        elif kind == "distinctness":
            f = catalog.distinctness_oracle(g.n, g.m)
        elif kind == "triangle":
            k = round((1 + math.sqrt(1 + 8 * g.n)) / 2)
            if k * (k - 1) // 2 != g.n:
                raise ValidationError(f"{args.graph}: at graph/n: {g.n} is not a number of vertex pairs")
            f = catalog.triangle_oracle(k)
        else:
            ones = {tuple(x) for x in fdoc.get("ones", [])}
            f = FunctionOracle(g.n, g.m, lambda x: int(x in ones), name="table")
        f.budget = budget
        return g, f, {"source": args.graph, "kind": kind}

    name = args.catalog
    n = _int(args.n, "n")
    if name == "or":
        r = _int(args.r, "r", 1)
        _check_budget(n, 2, budget)
        g, _ = catalog.or_graph(n, r)
        f = catalog.or_oracle(n, r)
        info = {"kind": "or", "n": n, "r": r}
    elif name == "distinctness":
        r = _int(args.r, "r")
        m = _int(args.m, "m", n)
        _check_budget(n, m, budget)
        inst = catalog.distinctness_graph(n, r, m=m)
        g = inst.lgraph(rescale=False).graph
        f = catalog.distinctness_oracle(n, m)
        info = {"kind": "distinctness", "n": n, "r": r, "m": m,
                "stage_complexities": inst.stage_complexities(),
                "closed_form": list(catalog.distinctness_closed_form(n, r))}
    else:
        raise ValidationError(f"--catalog {name} has no single learning graph; use optimize or orbits")
    f.budget = budget
    return g, f, info


# -- commands -----------------------------------------------------------------------------


def cmd_complexity(args) -> int:
    g, f, info = _instance(args)
    comp = graph_complexity(g, f)
    result = {
        "instance": info,
        "vertices": len(g.vertices),
        "arcs": len(g.arcs),
        "negative": comp.negative,
        "positive": comp.positive,
        "total": comp.total,
        "worst_input": list(comp.worst_input) if comp.worst_input is not None else None,
    }
    _emit(args, result)
    return EXIT_OK


def _boolean(g: LGraph, f: FunctionOracle):
    if g.m == 2:
        return g, f, 1
    gb = multiplexor_expand(g)
    fb = encode_oracle(f)
    return gb, fb, gb.n // g.n


def cmd_compile(args) -> int:
    g, f, info = _instance(args)
    gb, fb, k = _boolean(g, f)
    dim = span_dimension(gb)
    if dim > args.dim_cap:
        raise DimensionCapError(dim, args.dim_cap)
    prog = compile_boolean(gb, fb, args.dim_cap)
    result = {
        "instance": info,
        "bits_per_symbol": k,
        "boolean_variables": gb.n,
        "dim": prog.dim,
        "free_vectors": int(prog.free.shape[1]),
        "input_vectors": int(prog.vectors.shape[1]),
    }
    if args.format == "json" and args.out:
        # program itself goes to --out, summary to stdout
        with open(args.out, "w") as fh:
            json.dump(prog.to_json(), fh, sort_keys=True)
        sys.stdout.write(json.dumps({"tool": "lgspan", "version": __version__, "config": _config(args),
                                     "result": result}, sort_keys=True, indent=2) + "\n")
        return EXIT_OK
    _emit(args, result)
    return EXIT_OK


def cmd_verify(args) -> int:
    g, f, info = _instance(args)
    gb, fb, k = _boolean(g, f)
    if gb.n > 20:
        raise BudgetExceededError("Boolean variable count", gb.n, 20)
    for x in f.ones():
        if not accepting_vertices(g, f, x):
            raise GraphDoesNotComputeError(x)
    dim = span_dimension(gb)
    if dim > args.dim_cap:
        raise DimensionCapError(dim, args.dim_cap)
    prog = compile_boolean(gb, fb, args.dim_cap)
    negative = float(neg_complexity(gb))
    energies: dict[frozenset, float] = {}
    agree = total = 0
    w0 = w1 = 0.0
    worst0 = worst1 = None
    pos_slack_ok = True
    max_residual = 0.0
    for y in fb.inputs():
        total += 1
        want, got = fb(y), evaluate(prog, y)
        if want != got:
            raise MisclassifiedInputError(y, want, got)
        agree += 1
        if want:
            wit = positive_witness(prog, y)
            sinks = accepting_vertices(gb, fb, y)
            if sinks not in energies:
                energies[sinks] = optimal_flow(gb, sinks)[1]
            if wit.size > energies[sinks] + args.tol:
                pos_slack_ok = False
            if wit.size > w1:
                w1, worst1 = wit.size, y
        else:
            wit = negative_witness(prog, y)
            if wit.size > w0:
                w0, worst0 = wit.size, y
        max_residual = max(max_residual, wit.residual)
    checks = {
        "evaluate_matches_f": agree == total,
        "wsize0_le_negative": w0 <= negative + args.tol,
        "wsize1_le_energy_each_input": pos_slack_ok,
        "witness_residuals_le_1e-8": max_residual <= 1e-8,
    }
    result = {
        "instance": info,
        "bits_per_symbol": k,
        "dim": prog.dim,
        "inputs": total,
        "agree": agree,
        "wsize0": w0,
        "wsize1": w1,
        "wsize": math.sqrt(w0 * w1),
        "worst0": list(worst0) if worst0 else None,
        "worst1": list(worst1) if worst1 else None,
        "negative_complexity": negative,
        "max_positive_energy": max(energies.values(), default=0.0),
        "max_residual": max_residual,
        "checks": checks,
        "ok": all(checks.values()),
    }
    _emit(args, result)
    return EXIT_OK if result["ok"] else EXIT_VERIFY


def cmd_optimize(args) -> int:
    bounds = {}
    if args.table_file:
        doc = _load_json(args.table_file, TABLE_FILE_SCHEMA)
        expr = symcalc.ComplexityExpr.from_json(doc)
        if isinstance(doc, dict):
            bounds = {p: tuple(b) for p, b in doc.get("bounds", {}).items()}
        name = args.table_file
    else:
        name = args.table or args.catalog
        if name not in symcalc.BUILTIN_TABLES:
            raise ValidationError(f"unknown table {name!r}; choose from {sorted(symcalc.BUILTIN_TABLES)}")
        expr = symcalc.BUILTIN_TABLES[name]()
    fixed = {"r": _fraction(args.r), "l": _fraction(args.l), "s": _fraction(args.s)}
    fixed = {p: v for p, v in fixed.items() if v is not None}
    unknown = set(fixed) - set(expr.params())
    if unknown:
        raise ValidationError(f"table has no parameter(s) {sorted(unknown)}")
    expr = expr.substitute(fixed)
    sol = symcalc.optimize_exponents(expr, bounds=bounds)
    result = {"table": name, "fixed": {p: symcalc.fmt(v) for p, v in fixed.items()}, **sol.to_json()}
    _emit(args, result, sol.to_markdown() if args.format == "markdown" else None)
    return EXIT_OK if result["certificate_ok"] else EXIT_VERIFY


def cmd_orbits(args) -> int:
    n = _int(args.n, "n")
    stage = _int(args.stage, "stage")
    if args.catalog == "distinctness":
        inst = catalog.distinctness_graph(n, _int(args.r, "r"))
        marking = inst.markings()[0]
    elif args.catalog == "triangle-new":
        s = _fraction(args.s) if args.s is not None else Fraction(1, 2)
        inst = catalog.triangle_new_instantiate(n, _int(args.r, "r"), s, with_subroutines=False)
        marking = inst.markings()[0]
    else:
        raise ValidationError("orbits supports --catalog distinctness or triangle-new")
    rg = inst.graph
    if not 1 <= stage <= rg.k:
        raise ValidationError(f"--stage must lie in 1..{rg.k}")
    reports = orbit_partition(rg, inst.symmetry(), lambda t: inst.valid(t, marking), stage=stage,
                              budget=args.group_budget)

    def describe(t):
        tr = rg.transitions[t]
        return f"{sorted(rg.vertices[tr.src].loaded)}->{sorted(rg.vertices[tr.dst].loaded)}"

    taus = [r.speciality for r in reports if r.speciality is not None]
    result = {
        "marking": list(marking),
        "stage": stage,
        "classes": [
            {"class_repr": describe(r.representative), "class_size": r.class_size,
             "valid_count": r.valid_count,
             "speciality": None if r.speciality is None else symcalc.fmt(r.speciality)}
            for r in reports
        ],
        "max_speciality": symcalc.fmt(max(taus)) if taus else None,
    }
    text = orbits_csv(reports, describe) if args.format == "csv" else None
    _emit(args, result, text)
    return EXIT_OK


def cmd_catalog(args) -> int:
    if args.action != "list":
        raise ValidationError("catalog supports only 'list'")
    result = {"generators": CATALOG, "tables": sorted(symcalc.BUILTIN_TABLES)}
    text = None
    if args.format != "json":
        text = "".join(f"{k}\t{v}\n" for k, v in CATALOG.items())
    _emit(args, result, text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------------


def _tolerance(text: str) -> float:
    value = float(text)
    if not 0 < value < 1e-3:
        raise argparse.ArgumentTypeError("tolerance must lie in (0, 1e-3)")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("budget must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--catalog", choices=sorted(CATALOG))
    common.add_argument("--graph", help="JSON file with 'graph' and 'function'")
    common.add_argument("--n", type=int)
    common.add_argument("--r", help="loaded-set size, or an exponent of n for optimize")
    common.add_argument("--l", help="exponent of n for optimize")
    common.add_argument("--s", help="edge probability, or an exponent of n for optimize")
    common.add_argument("--m", type=int, help="alphabet size (distinctness)")
    common.add_argument("--tol", type=_tolerance, default=DEFAULT_TOL)
    common.add_argument("--budget", type=_positive, default=DEFAULT_BRUTE_FORCE_BUDGET,
                        help="maximum oracle truth-table size m^n")
    common.add_argument("--dim-cap", dest="dim_cap", type=_positive, default=DEFAULT_DIM_CAP)
    common.add_argument("--group-budget", dest="group_budget", type=_positive, default=DEFAULT_GROUP_BUDGET)
    common.add_argument("--format", choices=("json", "csv", "markdown"), default="json")
    common.add_argument("--out")

    parser = argparse.ArgumentParser(prog="lgspan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lgspan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("complexity", parents=[common], help="negative/positive/total complexity").set_defaults(
        func=cmd_complexity)
    sub.add_parser("compile", parents=[common], help="compile to a span program").set_defaults(func=cmd_compile)
    sub.add_parser("verify", parents=[common], help="exhaustive span-program check").set_defaults(func=cmd_verify)
    opt = sub.add_parser("optimize", parents=[common], help="exact exponent optimization of a stage table")
    opt.add_argument("--table", choices=sorted(symcalc.BUILTIN_TABLES))
    opt.add_argument("--table-file", dest="table_file")
    opt.set_defaults(func=cmd_optimize)
    orb = sub.add_parser("orbits", parents=[common], help="orbit/speciality table of one stage")
    orb.add_argument("--stage", required=True)
    orb.set_defaults(func=cmd_orbits)
    cat = sub.add_parser("catalog", parents=[common], help="list generators")
    cat.add_argument("action", choices=("list",))
    cat.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("complexity", "compile", "verify") and not (args.catalog or args.graph):
        parser.error("give --catalog or --graph")
    try:
        return args.func(args)
    except (BudgetExceededError, DimensionCapError) as exc:
        print(f"lgspan: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (GraphDoesNotComputeError, MisclassifiedInputError, SymmetryError) as exc:
        print(f"lgspan: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ValidationError, UnboundedError) as exc:
        print(f"lgspan: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except LGSpanError as exc:
        print(f"lgspan: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
