"""Command-line interface: ``bellbounds {bounds,structure,certify,oracle,npa}``.

Reports are JSON, tables are CSV, floats carry 17 significant digits.
``--config file.json`` supplies defaults for any flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds as B
from . import npa
from .errors import (
    BellBoundsError,
    GridTooCoarseError,
    NonQuantumCalibrationError,
    UsageError,
)
from .expressions import BellExpression
from .oracle import DEFAULT_RESTARTS, validation_campaign
from .qubit import Observable
from .serialize import dumps
from .structure import StructureTable, audit_shape, compute_structure_fn, default_domain

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONQUANTUM = 3
EXIT_AUDIT = 4
EXIT_GRID = 5
EXIT_ORACLE = 6

INEQUALITIES = ("chsh", "mermin3", "f3sum", "mk")
CLASSES = ("11", "21", "111", "2sep", "general")

DEFAULTS = {
    "bounds": {},
    "structure": {"grid": 41, "band": 1e-3},
    "certify": {},
    "oracle": {"trials": 1000, "restarts": DEFAULT_RESTARTS},
    "npa_scan": {"family": "lambda", "alice": "orthogonal", "level": "auto", "tol": 1e-3, "seed": 0, "multistarts": 8},
    "npa_certify": {"level": "1", "seed": 0, "multistarts": 8},
}


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _expression(args) -> BellExpression:
    name = args.inequality
    if name is None:
        raise UsageError("--inequality is required")
    if name == "chsh":
        return BellExpression.chsh()
    if name == "mermin3":
        return BellExpression.mermin3()
    if name == "f3sum":
        return BellExpression.f3sum()
    if name == "mk":
        if args.n is None:
            raise UsageError("--inequality mk needs --n")
        return BellExpression.mk(int(args.n), float(args.t or 0.0))
    raise UsageError(f"unknown inequality {name!r}")


def _partition(label: str | None, expr: BellExpression) -> B.PartitionClass:
    if label is None:
        label = "11" if expr.n == 2 else "21"
    if label == "general":
        return B.ANY_STATE
    if label == "1" * expr.n:
        return B.FULL
    if expr.n > 2 and label in ("21", "2sep"):
        return B.TWO_SEP
    raise UsageError(f"class {label!r} does not apply to a {expr.n}-party inequality")


def _add_common_flags(p):
    # SUPPRESS keeps a subcommand from overwriting a value given before it
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON file with default flag values")
    p.add_argument("--output", default=argparse.SUPPRESS, help="write the primary output here")


def _add_expression_flags(p):
    _add_common_flags(p)
    p.add_argument("--inequality", choices=INEQUALITIES, help="Bell inequality preset")
    p.add_argument("--n", type=int, help="party count for --inequality mk")
    p.add_argument("--t", type=float, help="tilt t for --inequality mk (F cos t + F' sin t)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellbounds", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default flag values")
    parser.add_argument("--output", help="write the primary output here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="quantum and separable bounds at a setting")
    _add_expression_flags(p)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--omega", help="comma-separated cosines, one per party")
    grp.add_argument("--observables", help="JSON list of per-party [obs, obs'] with r, rstar, axis")
    p.add_argument("--class", dest="cls", choices=CLASSES, help="class for --observables")

    p = sub.add_parser("structure", help="numeric structure-function table")
    _add_expression_flags(p)
    p.add_argument("--class", dest="cls", choices=CLASSES)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--grid", type=int, help="number of v points on the default domain")
    grp.add_argument("--v", help="explicit comma-separated v values")
    p.add_argument("--resolution", type=int, help="cosine grid points per axis")
    p.add_argument("--band", type=float, help="constraint band |U - v|")
    p.add_argument("--format", choices=("csv", "json"), help="stdout format when --output is absent")

    p = sub.add_parser("certify", help="certify entanglement from calibration and observation")
    _add_expression_flags(p)
    p.add_argument("--class", dest="cls", choices=CLASSES)
    p.add_argument("--beta-cal", type=float)
    p.add_argument("--beta-obs", type=float)
    p.add_argument("--table", help="structure CSV (with JSON sidecar) for numeric classes")

    p = sub.add_parser("oracle", help="validate analytic bounds against brute-force maximization")
    _add_expression_flags(p)
    p.add_argument("--class", dest="cls", choices=CLASSES)
    p.add_argument("--trials", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--general", action="store_true", default=None, help="random non-projective observables")

    p = sub.add_parser("npa", help="moment-matrix test with known Alice measurements")
    nsub = p.add_subparsers(dest="npa_command", required=True)
    q = nsub.add_parser("scan", help="threshold scan over a correlation family")
    _add_common_flags(q)
    q.add_argument("--family", choices=("lambda",))
    q.add_argument("--alice", help="orthogonal, none, cos:<a>, or a KnownSide JSON file")
    q.add_argument("--level", choices=npa.LEVELS + ("auto",))
    q.add_argument("--tol", type=float)
    q.add_argument("--seed", type=int)
    q.add_argument("--multistarts", type=int)
    q = nsub.add_parser("certify", help="certify one correlation table")
    _add_common_flags(q)
    q.add_argument("--corr", help="correlation JSON file")
    q.add_argument("--alice", help="orthogonal, none, cos:<a>, or a KnownSide JSON file")
    q.add_argument("--level", choices=npa.LEVELS)
    q.add_argument("--seed", type=int)
    q.add_argument("--multistarts", type=int)
    return parser


def _merge(args, config: dict, key: str):
    for name, value in config.items():
        attr = name.replace("-", "_")
        if attr == "class":
            attr = "cls"
        if getattr(args, attr, None) is None:
            setattr(args, attr, value)
    for name, value in DEFAULTS[key].items():
        if getattr(args, name, None) is None:
            setattr(args, name, value)


def _alice(spec: str) -> npa.KnownSide:
    if spec == "orthogonal":
        return npa.KnownSide.orthogonal()
    if spec == "none":
        return npa.KnownSide.withheld()
    if spec.startswith("cos:"):
        return npa.KnownSide.with_cosine(float(spec[4:]))
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"--alice {spec!r} is neither a preset nor a file")
    return npa.KnownSide.from_json(path)


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_bounds(args) -> int:
    expr = _expression(args)
    if args.observables:
        data = json.loads(Path(args.observables).read_text(encoding="utf-8"))
        pairs = [
            tuple(Observable(float(o["r"]), tuple(o["axis"]), float(o.get("rstar", 0.0))) for o in pair)
            for pair in data
        ]
        cls = _partition(args.cls or "general", expr)
        res = B.general_setting_bound(pairs, expr, cls)
        out = {"class": cls.label(expr.n), "bound": res.value, "t0": res.t0, "terms": res.n_terms}
        if res.coarse is not None:
            out["coarse_bound"] = res.coarse
        _emit(args, dumps(out))
        return EXIT_OK
    if args.omega is None:
        raise UsageError("bounds needs --omega or --observables")
    report = B.bounds_report(expr, _floats(args.omega))
    _emit(args, dumps(report))
    return EXIT_OK


def cmd_structure(args) -> int:
    expr = _expression(args)
    cls = _partition(args.cls, expr)
    if args.v is not None:
        v_grid = _floats(args.v)
    else:
        lo, hi = default_domain(expr, cls)
        v_grid = np.linspace(lo, hi, int(args.grid))
    table = compute_structure_fn(expr, cls, v_grid, args.resolution, band=float(args.band))
    report = audit_shape(table)
    if args.output:
        table.write(args.output)
        sys.stdout.write(dumps(table.metadata()))
    elif args.format == "json":
        sys.stdout.write(dumps({"metadata": table.metadata(), "rows": [r.__dict__ for r in table.rows]}))
    else:
        sys.stdout.write(table.to_csv())
    return EXIT_OK if report.passed else EXIT_AUDIT


def cmd_certify(args) -> int:
    expr = _expression(args)
    cls = _partition(args.cls, expr)
    if args.beta_cal is None or args.beta_obs is None:
        raise UsageError("certify needs --beta-cal and --beta-obs")
    table = None
    if args.table:
        table = StructureTable.read(args.table)
        audit_shape(table)
    verdict = B.certify(expr, args.beta_cal, args.beta_obs, cls, table)
    _emit(args, dumps(verdict))
    return EXIT_OK


def cmd_oracle(args) -> int:
    expr = _expression(args)
    cls = _partition(args.cls, expr)
    if args.seed is None:
        raise UsageError("oracle needs --seed")
    report = validation_campaign(
        expr, cls, int(args.trials), int(args.seed), restarts=int(args.restarts), general_measurements=bool(args.general)
    )
    _emit(args, dumps(report))
    return EXIT_OK if report.passed else EXIT_ORACLE


def cmd_npa(args) -> int:
    if args.npa_command == "scan":
        result = npa.lambda_threshold_scan(
            _alice(args.alice), args.level, float(args.tol), int(args.multistarts), int(args.seed)
        )
        _emit(args, dumps(result))
        return EXIT_OK
    if not args.corr or not args.alice:
        raise UsageError("npa certify needs --corr and --alice")
    corr = npa.CorrelationTable.from_json(args.corr)
    verdict = npa.certify_correlation(corr, _alice(args.alice), args.level, int(args.multistarts), int(args.seed))
    out = verdict.to_dict()
    out["chsh"] = corr.chsh()
    _emit(args, dumps(out))
    return EXIT_OK


COMMANDS = {"bounds": cmd_bounds, "structure": cmd_structure, "certify": cmd_certify, "oracle": cmd_oracle, "npa": cmd_npa}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = {}
        if args.config:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(config, dict):
                raise UsageError("--config must hold a JSON object")
        key = args.command if args.command != "npa" else f"npa_{args.npa_command}"
        _merge(args, config, key)
        return COMMANDS[args.command](args)
    except NonQuantumCalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONQUANTUM
    except GridTooCoarseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GRID
    except (BellBoundsError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
