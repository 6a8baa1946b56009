"""Command-line front end.

Subcommands: fit, select, simulate, ci, extinction, curves, validate.
Every run writes a manifest JSON (resolved configuration plus library
versions and the RNG seed) sufficient to reproduce its outputs
byte for byte; reruns with identical flags and seed produce identical
files.  Exit codes are stable per error class:

0 success, 2 usage, 3 malformed input or model, 4 optimization failure,
5 numeric failure, 6 capacity exceeded, 7 iteration budget exhausted,
1 unexpected error.
"""

from __future__ import annotations

import argparse
import functools
import os
import secrets
import sys

import numpy as np
import scipy

from . import __version__
from .data import (GlobalRates, LifeVectorSample, detect_format,
                   read_global_rates, read_life_vectors, read_model,
                   write_global_rates, write_json, write_life_vectors,
                   write_model, write_table)
from .demography import (curves, extinction_age_curve, fertility_curve,
                         mortality_curve, survival_curve)
from .errors import (CapacityError, FitError, IterationError, MbtError,
                     NumericError, StructureError)
from .estimation import (FitConfig, fit_global, fit_individual,
                         fit_global_model, fit_individual_model)
from .likelihood import paper_class_count
from .model import build_atmmpp, validate as validate_model
from .selection import (aic, cross_validate, mse_global, msil_partition_mk1,
                        msil_partition_mk2, msil_select)
from .simulation import (SimConfig, aggregate_rates, preset,
                         simulate_rates, simulate_sample)
from .uncertainty import band_bootstrap, band_delta, band_resample

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_STRUCTURE = 3
EXIT_FIT = 4
EXIT_NUMERIC = 5
EXIT_CAPACITY = 6
EXIT_ITERATION = 7
EXIT_UNEXPECTED = 1


def _resolve_seed(args) -> int:
    if args.seed is None:
        return secrets.randbelow(2 ** 31)
    return args.seed


def _manifest(args, command: str, seed: int, outputs: list[str]) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    config["seed"] = seed
    return {
        "command": command,
        "config": config,
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "versions": {
            "mbtfit": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def _out(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, f"{args.prefix}_{name}")


def _load_data(args) -> GlobalRates | LifeVectorSample:
    fmt = args.format
    if fmt == "auto":
        fmt = detect_format(args.data)
    if fmt == "rates":
        return read_global_rates(args.data, class_length=args.l)
    return read_life_vectors(args.data, class_length=args.l)


def _parse_n_range(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..")
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(v) for v in text.split(",")]
    except ValueError:
        raise StructureError(f"cannot parse n range {text!r}; use forms like "
                             f"1..15 or 2,3,5") from None
    if not values or min(values) < 1:
        raise StructureError("n range must contain positive integers")
    return values


def _fit_config(args, seed: int, n: int | None = None) -> FitConfig:
    return FitConfig(n=args.n if n is None else n, seeds=args.seeds,
                     max_iter=args.max_iter, seed=seed)


# ---------------------------------------------------------------------------
# subcommands

def cmd_fit(args) -> int:
    seed = _resolve_seed(args)
    data = _load_data(args)
    config = _fit_config(args, seed)
    if isinstance(data, GlobalRates):
        weights = None
        if args.weights == "counts":
            if data.counts is None:
                raise StructureError("--weights counts needs a count column")
            weights = data.counts
        result = fit_global(data, config, weights=weights)
        n_classes, l = data.n_classes, float(data.class_length)
    else:
        result = fit_individual(data, config)
        l = float(data.class_length)
        n_classes = max(len(v) - (1 if v.died else 0) for v in data)
    model = result.model
    outputs = [_out(args, "model.json"), _out(args, "curves.csv"),
               _out(args, "trace.json")]
    write_model(outputs[0], model, result.params)
    cur = curves(model, n_classes, l)
    write_table(outputs[1], ("age", "mortality", "fertility", "survival"),
                (cur.ages, cur.mortality, cur.fertility, cur.survival))
    write_json(outputs[2], {
        "objective": result.objective,
        "winner": result.winner,
        "diagnostics": list(result.diagnostics),
        "traces": [{"seed_index": t.seed_index, "converged": t.converged,
                    "value": t.value, "start_value": t.start_value,
                    "n_evaluations": t.n_evaluations} for t in result.traces],
    })
    write_json(_out(args, "manifest.json"), _manifest(args, "fit", seed, outputs))
    return EXIT_OK


def cmd_select(args) -> int:
    seed = _resolve_seed(args)
    data = _load_data(args)
    n_range = _parse_n_range(args.n_range)
    outputs = [_out(args, "report.json")]
    if args.criterion == "mse":
        model, _ = read_model(args.true_model) if args.true_model else (None, None)
        if model is None:
            raise StructureError("--criterion mse needs --true-model")
        if not isinstance(data, GlobalRates):
            data = aggregate_rates(data)
        N = args.N or 500
        T = args.T or data.n_classes * float(data.class_length)
        l = float(data.class_length)
        generator = functools.partial(_simulated_rates, model, N, T, l)
        config = _fit_config(args, seed, n=1)
        report = mse_global(model, n_range, generator, args.replicates, config)
    else:
        if isinstance(data, GlobalRates):
            raise StructureError(f"criterion {args.criterion} needs life vectors")
        config = _fit_config(args, seed, n=1)
        if args.criterion == "aic":
            report = aic(data, n_range, config)
        elif args.criterion == "cv":
            report = cross_validate(data, n_range, args.k_folds, config)
        else:
            K, M = args.msil_K, args.msil_M
            if args.rule == "mk1":
                K, M = msil_partition_mk1(data)
            elif args.rule == "mk2":
                K, M = msil_partition_mk2(data, args.covering_p)
            if K is None or M is None:
                raise StructureError("msil needs --msil-K/--msil-M or --rule")
            report = msil_select(data, n_range, args.k_folds, K, M, config)
    write_json(outputs[0], report.to_json_dict())
    if args.msil_grid and args.criterion == "msil":
        table = _msil_grid(data, n_range, args, seed)
        grid_path = _out(args, "msil_grid.json")
        outputs.append(grid_path)
        write_json(grid_path, table)
    write_json(_out(args, "manifest.json"), _manifest(args, "select", seed, outputs))
    return EXIT_OK


def _simulated_rates(model, N, T, l, rng):
    return simulate_rates(model, N, T, l, rng)


def _parse_grid_axis(spec: str) -> list[int]:
    lo, hi = spec.split("..")
    return list(range(int(lo), int(hi) + 1))


def _msil_grid(data, n_range, args, seed) -> dict:
    """Sensitivity sweep: chosen n for each (K, M) pair in the grid."""
    try:
        parts = dict(part.split("=") for part in args.msil_grid.split(","))
        Ms = _parse_grid_axis(parts["M"])
        Ks = _parse_grid_axis(parts["K"])
    except (KeyError, ValueError):
        raise StructureError(f"cannot parse --msil-grid {args.msil_grid!r}; "
                             f"expected M=2..4,K=0..3") from None
    config = _fit_config(args, seed, n=1)
    rows = []
    for M in Ms:
        for K in Ks:
            report = msil_select(data, n_range, args.k_folds, K, M, config)
            rows.append({"K": K, "M": M, "chosen_n": report.chosen_n,
                         "published_class_count": paper_class_count(K, M)})
    return {"grid": rows}


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    if args.preset:
        p = preset(args.preset)
        model = build_atmmpp(p.params)
        N = args.N or p.N
        T = args.T or p.T
    else:
        if not args.model:
            raise StructureError("simulate needs --preset or --model")
        model, _ = read_model(args.model)
        if not args.N or not args.T:
            raise StructureError("simulate with --model needs --N and --T")
        N, T = args.N, args.T
    rng = np.random.default_rng(seed)
    sample = simulate_sample(model, N, T, args.l, rng,
                             censor_prob=args.censor_prob)
    outputs = [_out(args, "vectors.csv" if not args.json else "vectors.json")]
    write_life_vectors(outputs[0], sample)
    if args.rates_out:
        rates = aggregate_rates(sample)
        rates_path = _out(args, "rates.csv")
        write_global_rates(rates_path, rates)
        outputs += [rates_path, rates_path + ".json"]
    write_json(_out(args, "manifest.json"),
               _manifest(args, "simulate", seed, outputs))
    return EXIT_OK


_OUTPUT_FNS = {
    "mortality": mortality_curve,
    "fertility": fertility_curve,
    "survival": lambda model, ages, l=1.0: survival_curve(model, ages),
    "extinction": lambda model, ages, l=1.0: extinction_age_curve(model, ages),
}


def _band_output_fn(name: str, l: float):
    return functools.partial(_OUTPUT_FNS[name], l=l)


def cmd_ci(args) -> int:
    seed = _resolve_seed(args)
    outputs = []
    ages = None
    if args.method == "resample":
        if not args.true_model:
            raise StructureError("--method resample needs --true-model")
        true_model, _ = read_model(args.true_model)
        sample = None
    else:
        data = _load_data(args)
        if isinstance(data, GlobalRates):
            raise StructureError("ci needs life-vector data")
        sample = data
        true_model = None
    l = args.l if args.l else (sample.class_length if sample else 1.0)
    if args.max_age is not None:
        ages = np.arange(0, args.max_age + 1e-9, l)
    elif sample is not None:
        n_cl = max(len(v) - (1 if v.died else 0) for v in sample)
        ages = np.arange(n_cl) * l
    else:
        raise StructureError("--max-age is required with --method resample")
    config = _fit_config(args, seed)
    if args.fit_method == "global":
        fit_fn = functools.partial(fit_global_model, config=config)
    else:
        fit_fn = functools.partial(fit_individual_model, config=config)
    targets = (["mortality", "fertility"] if args.output == "both"
               else [args.output])
    for name in targets:
        output_fn = _band_output_fn(name, l)
        if args.method == "resample":
            sim = SimConfig(N=args.N or 500, T=args.T or float(ages[-1] + l),
                            seed=seed, class_length=l)
            band = band_resample(true_model, fit_fn, output_fn, ages, args.B,
                                 sim, level=args.level, quantile=args.quantile,
                                 jobs=args.jobs)
        elif args.method == "bootstrap":
            band = band_bootstrap(sample, fit_fn, output_fn, ages, args.B,
                                  seed=seed, level=args.level,
                                  quantile=args.quantile, jobs=args.jobs)
        else:
            result = fit_individual(sample, config)
            band = band_delta(sample, result.params, output_fn, ages,
                              level=args.level)
        path = _out(args, f"band_{name}.csv")
        write_table(path, ("age", "estimate", "lower", "upper"),
                    (band.ages, band.estimate, band.lower, band.upper))
        write_json(path + ".json", {
            "method": band.method, "B": args.B, "level": band.level,
            "n_success": band.n_success, "n_failures": band.n_failures,
            "flags": list(band.flags), "output": name,
        })
        outputs += [path, path + ".json"]
    write_json(_out(args, "manifest.json"), _manifest(args, "ci", seed, outputs))
    return EXIT_OK


def cmd_extinction(args) -> int:
    seed = _resolve_seed(args)
    model, _ = read_model(args.model)
    ages = np.arange(0, args.max_age + 1e-9, args.step)
    values = extinction_age_curve(model, ages)
    outputs = [_out(args, "extinction.csv")]
    write_table(outputs[0], ("age", "extinction_probability"), (ages, values))
    write_json(_out(args, "manifest.json"),
               _manifest(args, "extinction", seed, outputs))
    return EXIT_OK


def cmd_curves(args) -> int:
    seed = _resolve_seed(args)
    model, _ = read_model(args.model)
    n_classes = int(args.max_age / args.l) + 1
    cur = curves(model, n_classes, args.l)
    outputs = [_out(args, "curves.csv")]
    write_table(outputs[0], ("age", "mortality", "fertility", "survival"),
                (cur.ages, cur.mortality, cur.fertility, cur.survival))
    write_json(_out(args, "manifest.json"),
               _manifest(args, "curves", seed, outputs))
    return EXIT_OK


def cmd_validate(args) -> int:
    if not args.model and not args.data:
        raise StructureError("validate needs --model or --data")
    if args.model:
        model, _ = read_model(args.model)
        violations = validate_model(model)
        for v in violations:
            print(f"violation: {v}")
        if violations:
            raise StructureError(f"{len(violations)} invariant(s) violated")
        print(f"model ok: n={model.n}")
    if args.data:
        data = _load_data(args)
        if isinstance(data, GlobalRates):
            present = int(np.isfinite(data.fertility).sum()
                          + np.isfinite(data.mortality).sum())
            print(f"rates ok: {data.n_classes} classes, class_length="
                  f"{data.class_length}, {present} present values")
        else:
            print(f"vectors ok: N={data.N}, class_length={data.class_length},"
                  f" max count={data.max_count}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mbtfit",
        description="Fit Markovian binary tree population models to "
                    "demographic data.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed; drawn and recorded when omitted")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--prefix", default=None, help="output file prefix")
        p.add_argument("--jobs", type=int, default=1,
                       help="max parallel replicate fits")
        if data:
            p.add_argument("--data", required=True, help="input data file")
            p.add_argument("--format", choices=("auto", "rates", "vectors"),
                           default="auto")
            p.add_argument("--l", type=float, default=None,
                           help="age-class length for CSV inputs")

    def fit_opts(p):
        p.add_argument("--seeds", type=int, default=25,
                       help="optimizer starts per fit")
        p.add_argument("--max-iter", type=int, default=10_000,
                       help="objective evaluations per start")

    p = sub.add_parser("fit", help="fit a model to rates or life vectors")
    common(p, data=True)
    fit_opts(p)
    p.add_argument("--n", type=int, required=True, help="number of phases")
    p.add_argument("--weights", choices=("survival", "counts"),
                   default="survival")
    p.set_defaults(func=cmd_fit, default_prefix="fit")

    p = sub.add_parser("select", help="choose the number of phases")
    common(p, data=True)
    fit_opts(p)
    p.add_argument("--criterion", choices=("aic", "cv", "msil", "mse"),
                   required=True)
    p.add_argument("--n-range", default="1..15")
    p.add_argument("--k-folds", type=int, default=5)
    p.add_argument("--msil-K", type=int, default=None)
    p.add_argument("--msil-M", type=int, default=None)
    p.add_argument("--rule", choices=("mk1", "mk2"), default=None,
                   help="derive msil K and M from the data")
    p.add_argument("--covering-p", type=float, default=0.05)
    p.add_argument("--msil-grid", default=None,
                   help="sensitivity sweep, e.g. M=2..4,K=0..3")
    p.add_argument("--true-model", default=None, help="model JSON for mse")
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--T", type=float, default=None)
    p.set_defaults(func=cmd_select, default_prefix="select")

    p = sub.add_parser("simulate", help="simulate life vectors")
    common(p)
    p.add_argument("--preset", choices=("example1", "example2", "example3"),
                   default=None)
    p.add_argument("--model", default=None, help="model JSON to simulate from")
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--l", type=float, default=1.0)
    p.add_argument("--censor-prob", type=float, default=0.0)
    p.add_argument("--json", action="store_true",
                   help="write the JSON envelope instead of CSV")
    p.add_argument("--rates-out", action="store_true",
                   help="also write aggregated global rates")
    p.set_defaults(func=cmd_simulate, default_prefix="sim")

    p = sub.add_parser("ci", help="confidence bands for model outputs")
    common(p)
    fit_opts(p)
    p.add_argument("--data", default=None, help="life-vector file")
    p.add_argument("--format", choices=("auto", "rates", "vectors"),
                   default="auto")
    p.add_argument("--l", type=float, default=None)
    p.add_argument("--method", choices=("bootstrap", "resample", "delta"),
                   required=True)
    p.add_argument("--B", type=int, default=25)
    p.add_argument("--n", type=int, required=True, help="number of phases")
    p.add_argument("--fit-method", choices=("individual", "global"),
                   default="individual")
    p.add_argument("--output", choices=("mortality", "fertility", "survival",
                                        "extinction", "both"), default="both")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--quantile", action="store_true",
                   help="use empirical quantiles instead of mean +- z sd")
    p.add_argument("--true-model", default=None)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--max-age", type=float, default=None)
    p.set_defaults(func=cmd_ci, default_prefix="ci")

    p = sub.add_parser("extinction", help="extinction probability by age")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--max-age", type=float, required=True)
    p.add_argument("--step", type=float, default=1.0)
    p.set_defaults(func=cmd_extinction, default_prefix="ext")

    p = sub.add_parser("curves", help="demographic curves for a model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--max-age", type=float, required=True)
    p.add_argument("--l", type=float, default=1.0)
    p.set_defaults(func=cmd_curves, default_prefix="curves")

    p = sub.add_parser("validate", help="check a model or data file")
    common(p)
    p.add_argument("--model", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--format", choices=("auto", "rates", "vectors"),
                   default="auto")
    p.add_argument("--l", type=float, default=None)
    p.set_defaults(func=cmd_validate, default_prefix="validate")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.prefix is None:
        args.prefix = args.default_prefix
    del args.default_prefix
    try:
        return args.func(args)
    except StructureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    except FitError as exc:
        print(f"optimization failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CapacityError as exc:
        print(f"capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except IterationError as exc:
        print(f"iteration budget exhausted: {exc}", file=sys.stderr)
        return EXIT_ITERATION
    except MbtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE


if __name__ == "__main__":
    sys.exit(main())
