"""Command-line front end.

Exit codes: 0 success, 1 a verification check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    DiscreteDistribution,
    Grid,
    TabularFunction,
    distribution_from_json,
    dump_json,
    extended_distribution,
    extended_support,
    function_from_json,
    load_json,
    support_mask,
    to_json,
)
from .counterexample import find_counterexample, ring_support
from .exact import aggregate_shap, shap_table, value_function
from .kernelshap import (
    KernelShapConfig,
    eta_estimate,
    iota_coefficients,
    kernelshap_rows,
    scramble_columns,
)
from .operators import l2_distance_sq, reconstruct_determined
from .tables import read_dataset, write_csv, write_heatmap
from .verify import CHECKS, VerifyConfig, run_checks

log = logging.getLogger("soundshap")

# Bundled counterexample geometries: (d1, d2, r_inner, r_outer)
EXAMPLES = {
    "fig1": (7, 7, 0.5, 1.0),
    "fig5": (3, 3, 0.5, 1.2),
    "fig6": (4, 4, 0.5, 1.2),
}


class InputError(ValueError):
    pass


# -- input resolution --------------------------------------------------------


def _example(name: str, full_extended: bool = False):
    if name not in EXAMPLES:
        raise InputError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    d1, d2, ri, ro = EXAMPLES[name]
    rep = find_counterexample(Grid.from_shape(d1, d2), ring_support(d1, d2, ri, ro), 0,
                              full_extended=full_extended)
    if not rep.found:
        raise InputError(f"example {name!r} did not produce a counterexample")
    return rep


def _builtin(spec: str, grid: Grid) -> TabularFunction:
    name, *args = spec.split(":")
    try:
        params = [float(a) for a in args]
    except ValueError:
        raise InputError(f"bad parameters in function spec {spec!r}") from None
    if name == "constant" and len(params) <= 1:
        c = params[0] if params else 1.0
        return TabularFunction(grid, np.full(grid.shape, c))
    if name == "additive" and not params:
        return TabularFunction.from_callable(grid, lambda *v: sum(v))
    if name == "product" and not params:
        return TabularFunction.from_callable(grid, lambda *v: float(np.prod(v)))
    if name == "indicator" and len(params) == 2:
        i, t = int(params[0]), params[1]
        if not 0 <= i < grid.d:
            raise InputError(f"indicator feature {i} out of range for d={grid.d}")
        return TabularFunction.from_callable(grid, lambda *v: float(v[i] >= t))
    raise InputError(
        f"unknown function spec {spec!r}; use constant[:c], additive, product, indicator:i:t, "
        "example:NAME, or a JSON file")


def _load_function_doc(spec: str):
    """Function (and optional distribution) from a JSON file or a bundled example."""
    if spec.startswith("example:"):
        rep = _example(spec.split(":", 1)[1])
        return rep.f, DiscreteDistribution(rep.f.grid, rep.mass)
    path = Path(spec)
    if not path.is_file():
        return None, None
    try:
        doc = load_json(path)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    f = function_from_json(doc)
    dist = distribution_from_json(doc) if "mass" in doc else None
    return f, dist


def _dist_on_grid(grid: Grid, X: np.ndarray) -> DiscreteDistribution:
    idx = grid.locate(X)
    counts = np.zeros(grid.shape)
    np.add.at(counts, tuple(idx.T), 1.0)
    return DiscreteDistribution(grid, counts / len(X))


def _grid_of_data(X: np.ndarray) -> Grid:
    return Grid([np.unique(X[:, j]) for j in range(X.shape[1])])


def resolve_inputs(args, need_data: bool = False):
    """``(X or None, dist, f)`` from --data/--dist and --function."""
    X = read_dataset(args.data) if getattr(args, "data", None) else None
    dist = None
    if getattr(args, "dist", None):
        dist = distribution_from_json(load_json(args.dist))
    f, f_dist = _load_function_doc(args.function)
    if f is None:
        if X is not None:
            grid = _grid_of_data(X)
        elif dist is not None:
            grid = dist.grid
        else:
            raise InputError(f"function {args.function!r} is a built-in; supply --data or --dist for its grid")
        f = _builtin(args.function, grid)
    if X is not None:
        dist = _dist_on_grid(f.grid, X)
    elif dist is None:
        dist = f_dist
    if need_data and X is None:
        raise InputError("this command needs --data")
    if dist is None:
        raise InputError("no distribution: supply --data or --dist, or a function file that carries 'mass'")
    if dist.grid != f.grid:
        raise InputError("distribution and function are defined on different grids")
    return X, dist, f


def _out(args, name: str) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _feature_cols(grid: Grid) -> list[str]:
    return [f"x{j}" for j in range(grid.d)]


def _write_table(args, stem: str, header: list[str], rows) -> Path:
    if args.format == "json":
        path = _out(args, stem + ".json")
        dump_json({"columns": header, "rows": [[float(v) for v in r] for r in rows]}, path)
    else:
        path = _out(args, stem + ".csv")
        write_csv(path, header, rows)
    return path


def _emit(summary: dict) -> None:
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")


# -- subcommands -------------------------------------------------------------


def cmd_shap(args) -> int:
    _, mu, f = resolve_inputs(args)
    grid = f.grid
    ms = extended_distribution(mu)
    d = grid.d
    phi = [shap_table(mu, f, i) for i in range(d)]
    phi_star = [shap_table(ms, f, i) for i in range(d)]
    in_supp = support_mask(mu)
    rows = []
    for cell in map(tuple, np.argwhere(extended_support(mu))):
        rows.append([*grid.cell_values(cell), float(in_supp[cell]), mu.mass[cell], ms.mass[cell], f.values[cell],
                     *(p[cell] for p in phi), *(p[cell] for p in phi_star)])
    header = (_feature_cols(grid) + ["in_support", "mass", "mass_star", "f"]
              + [f"phi_{i}" for i in range(d)] + [f"phi_star_{i}" for i in range(d)])
    table = _write_table(args, "shap_cells", header, rows)
    summary = {
        "d": d,
        "base_value": value_function(mu, f, (0,) * d, 0),
        "aggregate_mu": [aggregate_shap(mu, mu, f, i) for i in range(d)],
        "aggregate_mu_star": [aggregate_shap(ms, ms, f, i) for i in range(d)],
        "aggregate_mu_weights_mu_star_values": [aggregate_shap(ms, mu, f, i) for i in range(d)],
        "cells_file": table.name,
    }
    dump_json(summary, _out(args, "shap_summary.json"))
    _emit(summary)
    return 0


def _kcfg(args) -> KernelShapConfig:
    return KernelShapConfig(mode=args.mode, num_subset_samples=args.samples, rng_seed=args.seed)


def cmd_kshap(args) -> int:
    X, _, f = resolve_inputs(args, need_data=True)
    if args.scramble:
        X = scramble_columns(X, args.seed).rows
    K = kernelshap_rows(X, f, _kcfg(args))
    d = f.grid.d
    header = _feature_cols(f.grid) + [f"k_{i}" for i in range(d)]
    table = _write_table(args, "kshap_rows", header, np.hstack([X, K]))
    summary = {
        "d": d,
        "mode": args.mode,
        "scrambled": bool(args.scramble),
        "aggregate": np.mean(np.abs(K), axis=0).tolist(),
        "rows_file": table.name,
    }
    dump_json(summary, _out(args, "kshap_summary.json"))
    _emit(summary)
    return 0


def cmd_sound_aggregate(args) -> int:
    X, mu, f = resolve_inputs(args, need_data=True)
    d = f.grid.d
    i = args.feature
    if not 0 <= i < d:
        raise InputError(f"--feature {i} out of range for d={d}")
    cfg = _kcfg(args)
    X_star = scramble_columns(X, args.seed).rows
    write_csv(_out(args, "scrambled.csv"), _feature_cols(f.grid), X_star)
    K_star = kernelshap_rows(X_star, f, cfg)
    K_plain = kernelshap_rows(X, f, cfg)
    agg = np.mean(np.abs(K_star), axis=0)
    ms = extended_distribution(mu)
    eta = eta_estimate(X_star, ms, f, cfg)
    g = reconstruct_determined(ms, f, i, coefficients=iota_coefficients(d, i)[0])
    dist_sq = l2_distance_sq(ms, f, g)
    bound = d * d * (float(agg[i]) + eta)
    tol = 1e-9 if args.tol is None else args.tol
    summary = {
        "feature": i,
        "mode": args.mode,
        "aggregate": float(agg[i]),
        "aggregate_all": agg.tolist(),
        "aggregate_unscrambled": float(np.mean(np.abs(K_plain[:, i]))),
        "eta": eta,
        "certificate": {
            "l2_distance_sq": dist_sq,
            "bound": bound,
            "holds": bool(dist_sq <= bound + tol),
        },
        "f_in_unit_interval": bool(f.values.min() >= 0 and f.values.max() <= 1),
    }
    dump_json(summary, _out(args, "sound_aggregate.json"))
    _emit(summary)
    return 0


def _parse_grid(spec: str) -> Grid:
    try:
        sizes = [int(s) for s in spec.lower().split("x")]
    except ValueError:
        raise InputError(f"bad --grid {spec!r}; expected e.g. 3x3") from None
    if len(sizes) != 2 or min(sizes) < 1:
        raise InputError(f"bad --grid {spec!r}; expected two positive sizes like 3x3")
    return Grid.from_shape(*sizes)


def _parse_mask(spec: str, grid: Grid) -> np.ndarray:
    if spec.startswith("ring:"):
        try:
            _, ri, ro = spec.split(":")
            return ring_support(*grid.shape, float(ri), float(ro))
        except ValueError as exc:
            raise InputError(f"bad --mask {spec!r}: {exc}") from None
    doc = load_json(spec)
    raw = doc.get("mask", doc.get("support")) if isinstance(doc, dict) else doc
    if raw is None:
        raise InputError(f"{spec}: expected a 'mask' or 'support' entry")
    mask = np.asarray(raw, dtype=bool)
    if mask.size != grid.n_cells:
        raise InputError(f"{spec}: mask has {mask.size} cells, grid has {grid.n_cells}")
    return mask.reshape(grid.shape)


def cmd_counterexample(args) -> int:
    grid = _parse_grid(args.grid)
    mask = _parse_mask(args.mask, grid)
    if not 0 <= args.feature < grid.d:
        raise InputError(f"--feature {args.feature} out of range for d={grid.d}")
    threshold = 1e-6 if args.tol is None else args.tol
    rep = find_counterexample(grid, mask, args.feature, full_extended=args.full_extended, threshold=threshold)
    doc = rep.to_json()
    doc["grid"] = list(grid.shape)
    dump_json(doc, _out(args, "counterexample.json"))
    if rep.found:
        rows, cols = grid.feature_values
        dist = DiscreteDistribution(grid, rep.mass)
        table = shap_table(dist, rep.f, args.feature)
        ext = extended_support(dist)
        write_heatmap(_out(args, "f.csv"), rows, cols, rep.f.values)
        write_heatmap(_out(args, "shap_support.csv"), rows, cols, np.where(rep.support, table, np.nan))
        write_heatmap(_out(args, "shap_extended.csv"), rows, cols, np.where(ext, table, np.nan))
    else:
        print("no counterexample found", file=sys.stderr)
    _emit({k: doc[k] for k in ("found", "objective_value", "max_abs_shap_on_support",
                               "max_abs_shap_on_extended", "pair")})
    return 0


def cmd_verify(args) -> int:
    cfg = VerifyConfig(seed=args.seed, d=args.d, instances=args.instances, tol=args.tol)
    results = run_checks(args.check, cfg, inject_fault=args.inject_fault)
    report = {
        "seed": args.seed,
        "inject_fault": bool(args.inject_fault),
        "passed": all(r.passed for r in results),
        "checks": [r.to_json() for r in results],
    }
    dump_json(report, _out(args, "verify_report.json"))
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        extra = f" failing instances: {r.failing}" if r.failing else ""
        print(f"{status} {r.name} worst={r.worst:.3g} tol={r.tolerance:.3g} n={r.instances}{extra}")
    return 0 if report["passed"] else 1


def cmd_export_grid(args) -> int:
    if args.example:
        rep = _example(args.example)
        f, dist = rep.f, DiscreteDistribution(rep.f.grid, rep.mass)
    elif args.function:
        _, dist, f = resolve_inputs(args)
    else:
        raise InputError("export-grid needs --example or --function")
    grid = f.grid
    dump_json(to_json(grid, dist, f), _out(args, "grid.json"))
    rows = [[*grid.cell_values(c), dist.mass[c], f.values[c]] for c in grid.cells()]
    path = _write_table(args, "cells", _feature_cols(grid) + ["mass", "f"], rows)
    _emit({"d": grid.d, "shape": list(grid.shape), "files": ["grid.json", path.name]})
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base RNG seed (default 0)")
    common.add_argument("--tol", type=float, default=None, help="tolerance override for the command")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="format of tabular outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument("--data", help="CSV data matrix with a header row")
    inputs.add_argument("--dist", help="JSON distribution (features + mass)")
    inputs.add_argument("--function", required=True,
                        help="constant[:c] | additive | product | indicator:i:t | example:NAME | JSON file")

    ks = argparse.ArgumentParser(add_help=False)
    ks.add_argument("--mode", choices=("full_enumeration", "sampled"), default="full_enumeration")
    ks.add_argument("--samples", type=int, default=2048, help="subset samples in sampled mode")

    p = argparse.ArgumentParser(prog="soundshap", description="Exact and kernel SHAP on discrete grids.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("shap", parents=[common, inputs], help="exact SHAP values and aggregates")
    s.set_defaults(func=cmd_shap)

    s = sub.add_parser("kshap", parents=[common, inputs, ks], help="KernelSHAP at every data row")
    s.add_argument("--scramble", action="store_true", help="permute each column before explaining")
    s.set_defaults(func=cmd_kshap)

    s = sub.add_parser("sound-aggregate", parents=[common, inputs, ks],
                       help="scramble columns, aggregate KernelSHAP, and certify the bound")
    s.add_argument("--feature", type=int, required=True, help="0-based feature index")
    s.set_defaults(func=cmd_sound_aggregate)

    s = sub.add_parser("counterexample", parents=[common], help="LP search for zero-on-support SHAP")
    s.add_argument("--grid", default="3x3", help="grid size, e.g. 3x3")
    s.add_argument("--mask", default="ring:0.5:1.2", help="ring:r_inner:r_outer or a JSON file")
    s.add_argument("--feature", type=int, default=0, help="0-based feature index")
    s.add_argument("--full-extended", action="store_true", help="constrain every extended-support cell")
    s.set_defaults(func=cmd_counterexample)

    s = sub.add_parser("verify", parents=[common], help="run the numerical check battery")
    s.add_argument("--check", action="append", choices=sorted(CHECKS), help="run only this check (repeatable)")
    s.add_argument("--d", type=int, default=None, help="restrict random instances to d features")
    s.add_argument("--instances", type=float, default=1.0, help="multiplier on instance counts")
    s.add_argument("--inject-fault", action="store_true", help="negate one Shapley weight (canary)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("export-grid", parents=[common], help="write a grid, distribution and function")
    s.add_argument("--example", choices=sorted(EXAMPLES))
    s.add_argument("--data")
    s.add_argument("--dist")
    s.add_argument("--function")
    s.set_defaults(func=cmd_export_grid)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ValueError, KeyError, IndexError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"soundshap: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
