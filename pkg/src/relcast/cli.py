"""relcast command-line interface.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure,
4 integrity failure (package digest or format version).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .envflux import (
    DEFAULT_LOCATIONS,
    AltitudeMode,
    Environment,
    GeoPosition,
    NeutronConstants,
    acceleration_factor,
    grf_at,
    load_grf_grid,
    load_location_table,
)
from .errors import IntegrityError, NumericalError, RelcastError, VersionError
from .package import CompositionPlan, PackageMetadata, compose, make_package, predict_checked, read_package
from .ratemodel import TdrMode, demo_design, load_design
from .regress import RegressorSpec, evaluate, fit, metrics, metrics_csv, metrics_table
from .regress.metrics import ComparisonRow
from .sweep import (
    SplitSpec,
    dataset_csv_text,
    location_label,
    read_dataset_csv,
    run_sweep,
    split,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_INTEGRITY = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _atomic_write(path: str | Path, data: bytes | str) -> None:
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RELCAST_SEED")
    if env is None:
        return 42
    try:
        value = int(env, 0)
    except ValueError:
        raise CliError(f"RELCAST_SEED: not an integer ({env!r})") from None
    if not 0 <= value < 2**64:
        raise CliError("RELCAST_SEED: must be an unsigned 64-bit integer")
    return value


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} file not found: {path}")
    return p


def _locations(args):
    p = _existing(getattr(args, "locations", None), "locations")
    return load_location_table(p) if p else DEFAULT_LOCATIONS


def _spec_from_args(args, engine: str | None = None) -> RegressorSpec:
    hp = {
        "alpha": args.alpha,
        "degree": args.degree,
        "gamma": args.gamma,
        "coef0": args.coef0,
        "k": args.k,
        "radius": args.radius,
        "max_depth": args.max_depth,
    }
    return RegressorSpec.parse(engine or args.engine, args.kernel, **hp)


def _engines(args) -> list[str]:
    names = []
    for item in args.engine or ["kernel-ridge-poly"]:
        names += [s.strip() for s in item.split(",") if s.strip()]
    return names


# ------------------------------------------------------------------ commands


def cmd_sweep(args) -> int:
    design = load_design(_existing(args.design, "design")) if args.design else demo_design()
    design = design.with_mbit(args.mbit)
    locations = _locations(args)
    overrides = {}
    if args.location is not None:
        overrides["location"] = args.location
    if args.altitude_ft is not None:
        overrides["altitude_ft"] = args.altitude_ft
    if overrides:
        design = replace(design, **overrides)
    # resolve the location up front so a bad name fails before any work
    design.acceleration(Environment.NEUTRON, locations)
    mode = TdrMode(args.mode)
    ds = run_sweep(design, mode=mode, locations=locations)
    text = dataset_csv_text(ds)
    if args.out:
        _atomic_write(args.out, text)
    y = ds.y
    out = sys.stdout
    print(f"# relcast sweep | design={design.name} | mode={mode.value} | mbit={args.mbit}", file=out)
    print(f"rows: {len(ds)}", file=out)
    print(f"target range: [{y.min():.6g}, {y.max():.6g}] FIT", file=out)
    print(_preview_table(ds), file=out, end="")
    if not args.out:
        out.write(text)
    return EXIT_OK


def _preview_table(ds, head: int = 4, tail: int = 4) -> str:
    rows = list(range(min(head, len(ds))))
    rows += [i for i in range(max(len(ds) - tail, head), len(ds))]
    lines = [f"{'Sample':>6}  {'Voltage [V]':>11}  {'Env':<5}  {'Freq [MHz]':>10}  {'Location, Altitude':<20}  SER [FIT]"]
    prev = -1
    for i in rows:
        if i != prev + 1:
            lines.append("   ...")
        s = ds.samples[i]
        v = s.values
        lines.append(
            f"{i:>6}  {v['vdd_v']:>11g}  {v['env']:<5}  {v['freq_mhz']:>10g}  {location_label(v):<20}  {s.target_fit:.6g}"
        )
        prev = i
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    dataset = read_dataset_csv(_existing(args.dataset, "dataset"))
    seed = _seed(args)
    spec_split = SplitSpec(args.train_fraction, seed)
    engines = _engines(args)
    specs = [_spec_from_args(args, e) for e in engines]
    train, test = split(dataset, spec_split)
    if len(specs) > 1 and args.out and not Path(args.out).is_dir():
        raise CliError("--out must be an existing directory when training several engines")

    rows: list[ComparisonRow] = []
    failures = []
    outputs = []
    for spec in specs:
        try:
            model = fit(spec, train)
            train_m, test_m, full_m = evaluate(model, train), evaluate(model, test), evaluate(model, dataset)
        except NumericalError as exc:
            failures.append((spec.label, exc, EXIT_NUMERIC))
            rows += [ComparisonRow(spec.label, d, error=str(exc)) for d in ("train", "test", "full")]
            continue
        except RelcastError as exc:
            failures.append((spec.label, exc, EXIT_USAGE))
            rows += [ComparisonRow(spec.label, d, error=str(exc)) for d in ("train", "test", "full")]
            continue
        rows += [ComparisonRow(spec.label, "train", train_m), ComparisonRow(spec.label, "test", test_m),
                 ComparisonRow(spec.label, "full", full_m)]
        if args.out:
            name = args.name or spec.label
            pkg = make_package(model, PackageMetadata(name, args.provider, train_metrics=train_m, test_metrics=test_m))
            path = Path(args.out) / f"{spec.label}.json" if len(specs) > 1 else Path(args.out)
            outputs.append((path, pkg.to_bytes()))

    for path, data in outputs:
        _atomic_write(path, data)
    print(
        f"# relcast train | seed={seed} | train_fraction={args.train_fraction} | "
        f"n={len(dataset)} train={len(train)} test={len(test)}"
    )
    print(metrics_table(rows), end="")
    if args.metrics_csv:
        _atomic_write(args.metrics_csv, metrics_csv(rows))
    for path, _ in outputs:
        print(f"wrote {path}")
    if failures:
        label, exc, code = failures[0]
        raise CliError(f"engine {label} failed: {exc}", code)
    return EXIT_OK


def cmd_eval(args) -> int:
    pkg = read_package(_existing(args.package, "package"))
    data = read_dataset_csv(_existing(args.dataset, "dataset"))
    names = [p.name for p in pkg.parameter_space]
    rows = [{n: s.values[n] for n in names if n in s.values} for s in data.samples]
    missing = [n for n in names if n not in data.samples[0].values]
    if missing:
        raise CliError(f"dataset lacks package parameter(s): {', '.join(missing)}")
    pred = pkg.predict_many(rows)
    report = metrics(data.y, pred)
    print(f"# relcast eval | package={pkg.name} | seed={_seed(args)} | n={len(data)}")
    print(metrics_table([ComparisonRow(pkg.model.spec.label, "data", report)]), end="")
    if args.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample", "actual", "predicted", "error"])
        for i, (a, p) in enumerate(zip(data.y, pred)):
            w.writerow([i, repr(float(a)), repr(float(p)), repr(float(p - a))])
        _atomic_write(args.out, buf.getvalue())
    return EXIT_OK


def _parse_point(items: Sequence[str], pkg) -> dict:
    point = {}
    kinds = {p.name: p.kind.value for p in pkg.parameter_space}
    for item in items:
        if "=" not in item:
            raise CliError(f"--set expects NAME=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        name = name.strip()
        if kinds.get(name) == "continuous":
            try:
                point[name] = float(value)
            except ValueError:
                raise CliError(f"parameter {name}: not a number ({value!r})") from None
        elif kinds.get(name) == "geographic":
            point[name] = tuple(float(v) for v in value.split(":"))
        else:
            point[name] = value.strip()
    return point


def cmd_predict(args) -> int:
    pkg = read_package(_existing(args.package, "package"))
    if args.dataset:
        data = read_dataset_csv(_existing(args.dataset, "dataset"))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = pkg.parameter_names
        w.writerow(names + ["predicted_fit", "in_validity"])
        for s in data.samples:
            point = {n: s.values[n] for n in names if n in s.values}
            value, ok = predict_checked(pkg, point)
            w.writerow([point[n] for n in names] + [repr(value), str(ok).lower()])
        if args.out:
            _atomic_write(args.out, buf.getvalue())
            print(f"wrote {args.out}")
        else:
            sys.stdout.write(buf.getvalue())
        return EXIT_OK
    point = _parse_point(args.set or [], pkg)
    value, ok = predict_checked(pkg, point)
    print(f"predicted_fit: {value!r}")
    print(f"in_validity: {str(ok).lower()}")
    return EXIT_OK


def cmd_compose(args) -> int:
    pkgs = [read_package(_existing(p, "package")) for p in args.packages]
    unify = None
    if args.unify:
        unify = {}
        for item in args.unify:
            if "=" not in item:
                raise CliError(f"--unify expects MODEL.PARAM=NAME, got {item!r}")
            src, dst = item.split("=", 1)
            unify[src.strip()] = dst.strip()
    spec = _spec_from_args(args, _engines(args)[0])
    pkg = compose(CompositionPlan(tuple(pkgs), unify), spec, args.density, args.name or "composed", args.provider)
    _atomic_write(args.out, pkg.to_bytes())
    rows = [ComparisonRow(spec.label, k, v) for k, v in pkg.metrics.items()]
    print(f"# relcast compose | inputs={','.join(p.name for p in pkgs)} | density={args.density}")
    print("parameters: " + ", ".join(pkg.parameter_names))
    print(metrics_table(rows), end="")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_flux(args) -> int:
    locations = _locations(args)
    altitude = args.altitude_ft if args.altitude_ft is not None else 0.0
    mode = AltitudeMode(args.altitude_model)
    if args.lat is not None or args.lon is not None:
        if args.lat is None or args.lon is None:
            raise CliError("--lat and --lon must be given together")
        grid_path = _existing(args.grf, "GRF grid")
        if grid_path is None:
            raise CliError("a geographic position needs --grf")
        grid = load_grf_grid(grid_path)
        pos = GeoPosition(args.lat, args.lon, altitude)
        af = acceleration_factor(Environment.NEUTRON, position=pos, grf_grid=grid, mode=mode)
        where = f"lat={args.lat:g} lon={args.lon:g}"
        extra = f"grf: {grf_at(pos, grid)!r}"
    else:
        name = args.location or "NYC"
        af = acceleration_factor(Environment.NEUTRON, location=name, altitude_feet=altitude, locations=locations, mode=mode)
        where = name
        extra = None
    flux = NeutronConstants().flux_ref_per_cm2_h * af
    print(f"# relcast flux | location={where} | altitude_ft={altitude:g} | altitude_model={mode.value}")
    if extra:
        print(extra)
    print(f"acceleration_factor: {af:.6g}")
    print(f"neutron_flux_n_cm2_h: {flux:.6g}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    pkg = read_package(_existing(args.package, "package"))
    print(f"name: {pkg.name}")
    print(f"provider: {pkg.provider}")
    print(f"created_at: {pkg.created_at}")
    print(f"format_version: {pkg.format_version}")
    print(f"content_digest: {pkg.content_digest}")
    spec = pkg.model.spec
    print(f"engine: {spec.label}")
    for k, v in spec.hyperparameters.items():
        print(f"  {k}: {v}")
    print("parameter_space:")
    for p in pkg.parameter_space:
        if p.kind.value == "continuous":
            print(f"  {p.name} [{p.units}] continuous {p.minimum:g} .. {p.maximum:g}")
        else:
            print(f"  {p.name} {p.kind.value} levels={list(p.levels)}")
    if pkg.metrics:
        rows = [ComparisonRow(spec.label, k, v) for k, v in pkg.metrics.items()]
        print(metrics_table(rows), end="")
    if args.payload:
        payload = pkg.to_document()["payload"]
        print(json.dumps(payload, indent=1, sort_keys=True))
    return EXIT_OK


# -------------------------------------------------------------------- parser


def _add_engine_flags(p):
    p.add_argument("--engine", action="append", help="engine name (linear, ridge, kernel-ridge, knearest, radius, tree; "
                   "or kernel-ridge-<kernel>); repeat or comma-separate for several")
    p.add_argument("--kernel", help="kernel for kernel-ridge: linear, poly, rbf, sigmoid")
    p.add_argument("--alpha", type=float, help="regularization strength (default 1.0)")
    p.add_argument("--degree", type=int, help="polynomial kernel degree (default 3)")
    p.add_argument("--gamma", type=float, help="kernel gamma (default 1/n_features)")
    p.add_argument("--coef0", type=float, help="kernel offset (default 1.0)")
    p.add_argument("--k", type=int, help="neighbors for knearest (default 5)")
    p.add_argument("--radius", type=float, help="radius for radius neighbors (default 1.0)")
    p.add_argument("--max-depth", type=int, help="maximum tree depth (default unlimited)")


def _add_location_flags(p):
    p.add_argument("--locations", help="CSV name,factor table merged over the built-in location factors")
    p.add_argument("--grf", help="CSV lat_deg,lon_deg,grf geomagnetic rigidity factor grid")
    p.add_argument("--location", help="named location (default NYC)")
    p.add_argument("--altitude-ft", type=float, help="altitude in feet (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relcast", description="Compact reliability models: sweep, train, package, compose.")
    parser.add_argument("--version", action="version", version=f"relcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="evaluate the design's failure rate over the default parameter grid")
    p.add_argument("--design", help="design JSON file (default: built-in 1 Mb FF + 10 Mb logic demo)")
    p.add_argument("--mode", choices=["paper", "physical"], default="paper", help="temporal de-rating convention")
    p.add_argument("--mbit", choices=["decimal", "binary"], default="decimal", help="cells per Mbit convention")
    p.add_argument("--out", help="dataset CSV output path (default: standard output)")
    _add_location_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train", help="split a dataset, fit engines, write packages and print metrics")
    p.add_argument("--dataset", required=True, help="dataset CSV from 'relcast sweep'")
    _add_engine_flags(p)
    p.add_argument("--seed", type=_u64, help="split seed (default $RELCAST_SEED or 42)")
    p.add_argument("--train-fraction", type=float, default=0.6, help="training fraction (default 0.6)")
    p.add_argument("--out", help="package output path (a directory when several engines are given)")
    p.add_argument("--name", help="package name (default: engine label)")
    p.add_argument("--provider", default="", help="provider recorded in the package")
    p.add_argument("--metrics-csv", help="also write metrics as CSV to this path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a package against a dataset CSV")
    p.add_argument("package")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=_u64, help="recorded in the report header")
    p.add_argument("--out", help="per-sample error CSV for plotting")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict with a package at one point or for a dataset CSV")
    p.add_argument("package")
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="parameter value; repeat for each parameter")
    p.add_argument("--dataset", help="batch prediction over the rows of a dataset CSV")
    p.add_argument("--out", help="batch output CSV (default: standard output)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compose", help="sum several packages into one compact model")
    p.add_argument("packages", nargs="+")
    _add_engine_flags(p)
    p.add_argument("--unify", action="append", metavar="MODEL.PARAM=NAME", help="parameter unification entry")
    p.add_argument("--density", type=int, default=10, help="levels per continuous parameter (default 10)")
    p.add_argument("--name", help="composed package name")
    p.add_argument("--provider", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("flux", help="neutron flux and acceleration factor at a location and altitude")
    _add_location_flags(p)
    p.add_argument("--lat", type=float, help="latitude in degrees (with --lon and --grf)")
    p.add_argument("--lon", type=float, help="longitude in degrees")
    p.add_argument("--altitude-model", choices=["table", "analytical"], default="table")
    p.set_defaults(func=cmd_flux)

    p = sub.add_parser("inspect", help="print package metadata and parameter space")
    p.add_argument("package")
    p.add_argument("--payload", action="store_true", help="also print the payload numbers")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"relcast {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except (IntegrityError, VersionError) as exc:
        print(f"relcast {args.command}: integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except NumericalError as exc:
        print(f"relcast {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (RelcastError, OSError) as exc:
        print(f"relcast {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
