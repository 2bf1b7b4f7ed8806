"""Command-line front end.

Subcommands: generate, sample, identify, benchmark, kspike, verify-stability.
Exit codes: 0 success, 2 identification stopped at a gate, 1 usage or I/O error.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, replace
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import jsonio
from .errors import IdentificationFailure
from .model import MixtureModel, model_distance, random_model
from .moments import Dataset, MomentOracle, draw_samples
from .power import learn_power_distribution
from .bootstrap import hankel_from_moments
from .recover import identify, identify_from_selection
from .stability import stability_suite
from .subsets import FamilySelection

log = logging.getLogger("prodmix")

EXIT_OK, EXIT_USAGE, EXIT_GATED = 0, 1, 2
STAGE_KEYS = ("search_ms", "bootstrap_ms", "power_ms", "recover_ms")
CSV_COLUMNS = ("k", "n", "zeta", "pi_min", "mode", "eps_or_N", "seed", "model_distance",
               *STAGE_KEYS, "failure_stage")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class ExperimentConfig:
    k: int = 2
    n: int = None
    zeta: float = 0.3
    pi_min: float = 0.1
    seed: int = 0
    oracle: str = "exact"
    eps: float = 0.0
    samples: int = None
    strategy: str = "doubling"
    search: str = "all_separated"
    threshold_exponent: float = 10.0
    timings: bool = True

    def bits(self):
        if self.n is not None:
            return self.n
        return 2 * self.k - 1 if self.strategy == "sequential" else max(3 * self.k - 3, 1)

    def validate(self):
        need = 2 * self.k - 1 if self.strategy == "sequential" else max(3 * self.k - 3, 1)
        if self.bits() < need:
            raise UsageError(f"--n must be >= {need} for k={self.k} with {self.strategy}")
        if self.oracle == "empirical" and not self.samples:
            raise UsageError("--oracle empirical needs --samples (or --dataset)")


def _make_oracle(config, model, eps_or_N, seed):
    if config.oracle == "exact":
        return MomentOracle.exact(model)
    if config.oracle == "perturbed":
        return MomentOracle.perturbed(model, eps_or_N, seed=seed)
    return MomentOracle.empirical(draw_samples(model, int(eps_or_N), seed=seed))


def _record(config, seed, eps_or_N, model, result=None, failure=None):
    rec = {"k": config.k, "n": config.bits(), "zeta": config.zeta, "pi_min": config.pi_min,
           "mode": config.oracle, "eps_or_N": eps_or_N, "seed": seed, "model_distance": None}
    times = {}
    if result is not None:
        times = result.diagnostics.get("stage_times_ms", {})
        if model is not None:
            rec["model_distance"] = model_distance(result.model, model).max_param_error
    for key in STAGE_KEYS:
        value = times.get(key)
        rec[key] = (value if config.timings else 0.0) if value is not None else None
    rec["failure_stage"] = None if failure is None else failure.stage
    if failure is not None:
        rec["failure"] = str(failure)
    return rec


def run_trial(config, seed, eps_or_N=None):
    """One seeded identification trial; never raises on gated failures."""
    if eps_or_N is None:
        eps_or_N = config.samples if config.oracle == "empirical" else config.eps
    model = random_model(config.k, config.bits(), config.zeta, config.pi_min, seed=seed)
    oracle = _make_oracle(config, model, eps_or_N, seed)
    try:
        result = identify(oracle, model.n, config.k, config.zeta, config.pi_min,
                          strategy=config.strategy, search=config.search,
                          threshold_exponent=config.threshold_exponent)
    except IdentificationFailure as exc:
        return _record(config, seed, eps_or_N, model, failure=exc)
    return _record(config, seed, eps_or_N, model, result=result)


def aggregate(records):
    """Per-cell medians and quantiles of model_distance, recomputable from the records."""
    cells = {}
    for rec in records:
        cells.setdefault(rec["eps_or_N"], []).append(rec)
    out = {"trials": len(records), "cells": []}
    xs, meds = [], []
    for cell in sorted(cells):
        recs = cells[cell]
        dists = [r["model_distance"] for r in recs if r["model_distance"] is not None]
        entry = {"eps_or_N": cell, "trials": len(recs), "succeeded": len(dists),
                 "failures": {}}
        for r in recs:
            if r["failure_stage"]:
                entry["failures"][r["failure_stage"]] = entry["failures"].get(r["failure_stage"], 0) + 1
        if dists:
            q25, med, q75 = np.quantile(dists, [0.25, 0.5, 0.75])
            entry.update(median=float(med), q25=float(q25), q75=float(q75), max=float(max(dists)))
            if cell and cell > 0 and med > 0:
                xs.append(math.log(cell))
                meds.append(math.log(med))
        out["cells"].append(entry)
    out["loglog_slope"] = float(np.polyfit(xs, meds, 1)[0]) if len(xs) >= 2 else None
    return out


def _write_report(path, records, agg):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(jsonio.dumps(rec, indent=None) + "\n")
        fh.write(jsonio.dumps({"aggregate": agg}, indent=None) + "\n")


def _fmt_csv(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([_fmt_csv(rec.get(col)) for col in CSV_COLUMNS])


def _config_from_args(args):
    search = getattr(args, "search", "all-separated").replace("-", "_")
    config = ExperimentConfig(
        k=args.k, n=args.n, zeta=args.zeta, pi_min=args.pi_min, seed=args.seed,
        oracle=getattr(args, "oracle", "exact"), eps=getattr(args, "eps", 0.0) or 0.0,
        samples=getattr(args, "samples", None), strategy=getattr(args, "strategy", "doubling"),
        search=search, threshold_exponent=getattr(args, "threshold_exponent", 10.0),
        timings=not getattr(args, "no_timings", False))
    return config


def cmd_generate(args):
    if args.k >= 2 and args.zeta > 1.0 / (args.k - 1) + 1e-12:
        raise UsageError(f"--zeta {args.zeta} exceeds 1/(k-1) for k={args.k}")
    n = args.n if args.n is not None else max(3 * args.k - 3, 1)
    sep = "all" if args.separated_rows is None else args.separated_rows
    try:
        model = random_model(args.k, n, args.zeta, args.pi_min, separated_rows=sep, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = jsonio.dumps(model.to_dict()) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sample(args):
    if not args.model or not args.samples:
        raise UsageError("sample needs --model and --samples")
    model = MixtureModel.load(args.model)
    data = draw_samples(model, args.samples, seed=args.seed)
    if not args.out:
        raise UsageError("sample needs --out")
    if args.binary:
        data.save_binary(args.out)
    else:
        data.save_text(args.out)
    return EXIT_OK


def cmd_identify(args):
    truth = MixtureModel.load(args.model) if args.model else None
    if args.k is None:
        if truth is None:
            raise UsageError("identify needs --k when no --model is given")
        args.k = truth.k
    config = _config_from_args(args)
    if truth is not None and truth.k != config.k:
        raise UsageError(f"--k {config.k} does not match the model's k={truth.k}")

    if args.dataset:
        dataset = Dataset.load(args.dataset)
        config = replace(config, n=dataset.n, oracle="empirical", samples=dataset.N)
        config.validate()
        oracle = MomentOracle.empirical(dataset)
        eps_or_N = dataset.N
        if truth is not None and truth.n != dataset.n:
            raise UsageError("model and dataset disagree on n")
    else:
        if truth is None:
            config.validate()
            truth = random_model(config.k, config.bits(), config.zeta, config.pi_min,
                                 seed=config.seed)
        config = replace(config, n=truth.n)
        config.validate()
        eps_or_N = config.samples if config.oracle == "empirical" else config.eps
        oracle = _make_oracle(config, truth, eps_or_N, config.seed)

    result, failure = None, None
    try:
        if args.families_in:
            selection = FamilySelection.from_dict(jsonio.load(args.families_in))
            result = identify_from_selection(oracle, selection, config.zeta, config.pi_min,
                                             config.strategy, dump_bootstrap=args.dump_bootstrap)
        else:
            result = identify(oracle, oracle.n, config.k, config.zeta, config.pi_min,
                              strategy=config.strategy, search=config.search,
                              threshold_exponent=config.threshold_exponent,
                              dump_bootstrap=args.dump_bootstrap)
    except IdentificationFailure as exc:
        failure = exc

    rec = _record(config, config.seed, eps_or_N, truth, result=result, failure=failure)
    agg = aggregate([rec])
    if args.report:
        _write_report(args.report, [rec], agg)
    if result is not None:
        if not config.timings:
            result.diagnostics["stage_times_ms"] = {key: 0.0 for key in STAGE_KEYS}
        if args.out:
            result.save(args.out)
        if args.families_out and result.selection is not None:
            jsonio.dump(result.selection.to_dict(), args.families_out)
    sys.stdout.write(jsonio.dumps(rec, indent=None) + "\n")
    if failure is not None:
        log.error("identification failed at stage %s: %s", failure.stage, failure)
        return EXIT_GATED
    return EXIT_OK


def _parse_grid(text, cast=float):
    return [cast(float(x)) for x in text.split(",") if x.strip()]


def cmd_benchmark(args):
    config = _config_from_args(args)
    if config.oracle == "empirical":
        grid = _parse_grid(args.samples_grid, int) if args.samples_grid else [config.samples]
    elif config.oracle == "perturbed":
        grid = _parse_grid(args.eps_grid) if args.eps_grid else [config.eps]
    else:
        grid = [0.0]
    if any(g is None for g in grid):
        raise UsageError("benchmark needs --eps-grid/--eps or --samples-grid/--samples")
    config = replace(config, samples=config.samples or (grid[0] if config.oracle == "empirical" else None))
    config.validate()

    seeds = [config.seed + t for t in range(args.trials)]
    jobs = [(config, seed, cell) for cell in grid for seed in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(run_trial, *zip(*jobs)))
    else:
        records = [run_trial(*job) for job in jobs]
    records.sort(key=lambda r: (r["eps_or_N"], r["seed"]))
    agg = aggregate(records)

    if args.out:
        _write_csv(args.out, records)
        if args.plot:
            from .plotting import plot_error_scaling, plot_stage_times
            stem = Path(args.out).with_suffix("")
            plot_error_scaling(records, f"{stem}_error.png", slope=agg["loglog_slope"])
            plot_stage_times(records, f"{stem}_times.png")
    if args.report:
        _write_report(args.report, records, agg)
    sys.stdout.write(jsonio.dumps(agg) + "\n")
    return EXIT_OK


def _read_moments(path):
    text = sys.stdin.read() if path in (None, "-") else Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    if isinstance(data, dict):
        data = data.get("moments", data.get("mu"))
    if not isinstance(data, list) or not data:
        raise UsageError("moments must be a JSON list [mu_0, ..., mu_2k]")
    return [float(x) for x in data]


def cmd_kspike(args):
    mu = _read_moments(args.moments)
    k = args.k if args.k is not None else (len(mu) - 1) // 2
    if len(mu) < 2 * k + 1 or k < 1:
        raise UsageError(f"need 2k+1 = {2 * k + 1} moments, got {len(mu)}")
    try:
        d = learn_power_distribution(hankel_from_moments(mu, k), k)
    except IdentificationFailure as exc:
        log.error("spike recovery failed: %s", exc)
        return EXIT_GATED
    out = {"k": k, "support": d.support.tolist(), "weights": d.weights.tolist()}
    text = jsonio.dumps(out) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify_stability(args):
    report = stability_suite(n_instances=args.instances, seed=args.seed, zeta=args.zeta,
                             k_values=tuple(range(2, args.k_max + 1)))
    text = jsonio.dumps(report) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if report["total_violations"] == 0 else EXIT_GATED


def _add_model_args(p, k_default=2):
    p.add_argument("--k", type=int, default=k_default, help="number of hidden states")
    p.add_argument("--n", type=int, default=None, help="number of observed bits")
    p.add_argument("--zeta", type=float, default=0.3, help="row separation")
    p.add_argument("--pi-min", type=float, default=0.1, help="mixing-weight floor")
    p.add_argument("--seed", type=int, default=0)


def _add_run_args(p):
    p.add_argument("--oracle", choices=("exact", "perturbed", "empirical"), default="exact")
    p.add_argument("--eps", type=float, default=0.0, help="perturbation size (perturbed oracle)")
    p.add_argument("--samples", type=int, default=None, help="sample count (empirical oracle)")
    p.add_argument("--strategy", choices=("sequential", "doubling"), default="doubling")
    p.add_argument("--search", choices=("exhaustive", "all-separated"), default="all-separated")
    p.add_argument("--threshold-exponent", type=float, default=10.0,
                   help="selection threshold is pi_min * zeta^(c k^2) for this c")
    p.add_argument("--report", default=None, help="JSON-lines trial report")
    p.add_argument("--no-timings", action="store_true",
                   help="write zero stage timings so outputs are byte-reproducible")


def build_parser():
    parser = _Parser(prog="prodmix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a random separated model as JSON")
    _add_model_args(p)
    p.add_argument("--separated-rows", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", help="draw a dataset from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--binary", action="store_true", help="packed MIXB1 format")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("identify", help="recover a model from moments")
    _add_model_args(p, k_default=None)
    _add_run_args(p)
    p.add_argument("--model", default=None, help="ground-truth model JSON")
    p.add_argument("--dataset", default=None, help="dataset file (text or MIXB1)")
    p.add_argument("--out", default=None, help="recovered model JSON")
    p.add_argument("--dump-bootstrap", default=None)
    p.add_argument("--families-in", default=None)
    p.add_argument("--families-out", default=None)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("benchmark", help="sweep identification over eps or N")
    _add_model_args(p)
    _add_run_args(p)
    p.add_argument("--eps-grid", default=None, help="comma-separated eps values")
    p.add_argument("--samples-grid", default=None, help="comma-separated sample counts")
    p.add_argument("--trials", type=int, default=10, help="seeds per grid cell")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV table")
    p.add_argument("--plot", action="store_true", help="render PNG figures next to --out")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("kspike", help="recover a k-spike distribution from a JSON moment list")
    p.add_argument("--moments", default="-", help="JSON file, or - for stdin")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_kspike)

    p = sub.add_parser("verify-stability", help="Monte-Carlo sweep of the conditioning bounds")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zeta", type=float, default=0.2)
    p.add_argument("--k-max", type=int, default=4)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify_stability)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
