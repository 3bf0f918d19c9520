"""Command line: ``hpsplit run|plot|oracle``.

Exit codes: 0 success, 1 runtime failure (or a failed oracle), 2 usage or
configuration error. Errors are also written to stderr as one JSON line.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from .config import OUTPUT_DIR_ENV, ConfigError, load_config

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
ORACLE_KINDS = ("constants", "gradcheck", "lemma")


def _error(kind, message, code, **extra):
    print(json.dumps({"error": kind, "message": message, "exit_code": code, **extra},
                     sort_keys=True), file=sys.stderr)
    return code


def _cmd_run(args):
    from .suite import run_suite

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _error("config", str(exc), EXIT_USAGE,
                      problems=[{"key": k, "message": m} for k, m in exc.problems])
    try:
        _, summaries, paths = run_suite(cfg)
    except Exception as exc:  # reported, not raised: the exit code carries it
        logging.getLogger(__name__).debug("run failed", exc_info=True)
        return _error(type(exc).__name__, str(exc), EXIT_RUNTIME)
    for s in summaries:
        print(f"{s.scenario} n={s.n} ratio_a={s.ratio_a:.4f} ratio_b={s.ratio_b:.4f} "
              f"excluded={s.excluded_count} diverged={s.diverged_count}")
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return EXIT_OK


def _cmd_plot(args):
    from .metrics import CsvFormatError
    from .plotting import PlotError, plot

    try:
        plot(args.summary, args.output)
    except (CsvFormatError, PlotError) as exc:
        return _error("input", str(exc), EXIT_RUNTIME)
    except OSError as exc:
        return _error("io", str(exc), EXIT_RUNTIME)
    print(f"wrote {args.output}")
    return EXIT_OK


# -- oracle reports ---------------------------------------------------------

def oracle_constants(mc_samples, seed):
    from .datagen import estimate_constants

    est = estimate_constants(mc_samples, seed)
    data = asdict(est)
    failures = [f"{k} is not finite" for k, v in data.items() if not np.isfinite(v)]
    if not est.nonlinear_signal_variance > 0:
        failures.append("nonlinear_signal_variance must be positive")
    return data, failures


def oracle_gradcheck(seed, instances=20):
    from . import oracles

    suite = oracles.gradcheck_suite(instances, seed)
    rng = np.random.default_rng(seed)
    rnn_errors = []
    failures = list(suite["failures"])
    for i in range(instances):
        model = oracles.RnnA2.random(rng, 3, 2)
        rep = oracles.rnn_bound_check(rng.uniform(-1, 1, (6, 2)), model)
        rnn_errors.append(rep.max_rel_error)
        failures += [f"rnn instance {i}: {v}" for v in rep.violations]
    data = {
        "instances_per_family": instances, "seed": seed,
        "max_rel_error": {f: max(r.max_rel_error for r in rs) for f, rs in suite["results"].items()},
        "max_params": {f: max(r.n_params for r in rs) for f, rs in suite["results"].items()},
        "closed_form_max_abs_diff": max(suite["closed_form_max_abs"]),
        "rnn_recursion_max_rel_error": max(rnn_errors),
    }
    return data, failures


def oracle_lemma(seed, scenarios=10):
    from .oracles import lemma1_check, make_lemma_scenario

    rows, failures = [], []
    for i in range(scenarios):
        for b_range in ((1.0, 2.0), (1.0, 1.05)):
            sc = make_lemma_scenario(seed + i, b_range=b_range)
            rep = lemma1_check(sc)
            rows.append({"seed": seed + i, "b_range": list(b_range),
                         "ratios": rep.ratios.tolist(),
                         "empirical_constant": rep.empirical_constant,
                         "bound_constant": rep.bound_constant})
            if np.any(rep.ratios < 1):
                failures.append(f"scenario {seed + i} {b_range}: ratio below 1")
            if np.any(rep.ratios - 1 > rep.bound_constant * sc.eta):
                failures.append(f"scenario {seed + i} {b_range}: ratio - 1 exceeds C * eta")
    return {"n_values": [1e2, 1e3, 1e4, 1e5], "scenarios": rows}, failures


def _cmd_oracle(args):
    out_dir = os.environ.get(OUTPUT_DIR_ENV) or args.output_dir
    if args.kind == "constants":
        from .datagen import DEFAULT_MC_SEED
        seed = DEFAULT_MC_SEED if args.seed is None else args.seed
        data, failures = oracle_constants(args.mc_samples, seed)
    elif args.kind == "gradcheck":
        data, failures = oracle_gradcheck(args.seed or 0)
    else:
        data, failures = oracle_lemma(args.seed or 0)
    report = {"kind": args.kind, "passed": not failures, "failures": failures, "data": data}
    try:
        os.makedirs(out_dir, exist_ok=True)
        base = os.path.join(out_dir, f"oracle_{args.kind}")
        with open(base + ".json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        lines = [f"oracle {args.kind}: {'PASS' if not failures else 'FAIL'}"]
        lines += [f"  {k}: {v}" for k, v in data.items() if k != "scenarios"]
        lines += [f"  failure: {f}" for f in failures]
        with open(base + ".txt", "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        return _error("io", str(exc), EXIT_RUNTIME)
    print("\n".join(lines))
    return EXIT_OK if not failures else EXIT_RUNTIME


def build_parser():
    p = argparse.ArgumentParser(prog="hpsplit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation suite from a TOML config")
    run.add_argument("config")
    run.set_defaults(func=_cmd_run)

    plt = sub.add_parser("plot", help="render summary.csv as a two-panel SVG")
    plt.add_argument("summary")
    plt.add_argument("output")
    plt.set_defaults(func=_cmd_plot)

    orc = sub.add_parser("oracle", help="run a verification oracle and write its report")
    orc.add_argument("kind", choices=ORACLE_KINDS)
    orc.add_argument("--output-dir", default="hpsplit-out",
                     help=f"report directory (overridden by ${OUTPUT_DIR_ENV})")
    orc.add_argument("--seed", type=int, default=None,
                     help="defaults to the library's Monte-Carlo seed for constants, 0 otherwise")
    orc.add_argument("--mc-samples", type=int, default=1_000_000)
    orc.set_defaults(func=_cmd_oracle)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "oracle" and args.kind == "constants" and args.mc_samples < 100_000:
        return _error("usage", "--mc-samples must be >= 100000", EXIT_USAGE)
    return args.func(args)
