"""Command-line interface: simulate, evaluate, diagnose, ingest.

Exit codes: 0 success, 2 configuration error, 3 data error.  Per-trial
engine failures inside a simulation never change the exit code; they are
recorded in the results table.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import AlternativeDataset, CaseBundle, MeasurementPanel, ingest_csv
from .errors import (
    ConfigError,
    FidsourceError,
    NonPositiveConcentration,
    SchemaError,
)
from .harness import (
    DESK_ENGINES,
    PAPER_ENGINES,
    DesignConfig,
    emit_plot_data,
    evaluate_case,
    load_results,
    run_design,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fidsource",
        description="Evidence-strength measures for identification-of-source problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one of the three simulation designs")
    sim.add_argument("--design", type=int, choices=(1, 2, 3), required=True)
    sim.add_argument("--config", type=Path, help="JSON config file (overrides the scale preset)")
    sim.add_argument("--scale", choices=("paper", "desk"), default="desk")
    sim.add_argument("--dataset", type=Path, help="directory with training.csv and calibration.csv")
    sim.add_argument("--outdir", type=Path, help="output directory for results and manifest")
    sim.add_argument("--master-seed", type=int, default=None)
    sim.add_argument("--quiet", action="store_true")

    ev = sub.add_parser("evaluate", help="compute evidence measures for one case")
    ev.add_argument(
        "--case",
        nargs=3,
        metavar=("SPECIFIC", "UNKNOWN", "ALTERNATIVE"),
        required=True,
        help="three CSV files: specific panel, unknown panel, alternative panels",
    )
    ev.add_argument("--method", choices=("gff", "bf", "lr", "all"), default="all")
    ev.add_argument("--scale", choices=("paper", "desk"), default="desk")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--log-transform", action="store_true")

    diag = sub.add_parser("diagnose", help="emit plot data from a results table")
    diag.add_argument("--results", type=Path, required=True, help="results.jsonl path")
    diag.add_argument("--kind", choices=("boxplot", "auc", "calibration", "ece"), required=True)
    diag.add_argument("--outdir", type=Path, default=Path("."))
    diag.add_argument("--seed", type=int, default=0)

    ing = sub.add_parser("ingest", help="validate a panel CSV and summarize it")
    ing.add_argument("--csv", type=Path, required=True)
    ing.add_argument("--log-transform", action="store_true")
    ing.add_argument("--out", type=Path, help="re-export the normalized panels here")
    return parser


def _cmd_simulate(args):
    if args.config:
        config = DesignConfig.from_file(args.config)
        if config.design_id != args.design:
            raise ConfigError(
                f"--design {args.design} disagrees with config design_id {config.design_id}"
            )
    else:
        config = DesignConfig.preset(args.design, args.scale)
    overrides = {}
    if args.dataset:
        overrides["dataset_dir"] = str(args.dataset)
    if args.outdir:
        overrides["outdir"] = str(args.outdir)
    if args.master_seed is not None:
        overrides["master_seed"] = args.master_seed
    if overrides:
        config = replace(config, **overrides)
    config.validate()

    def progress(result):
        if not args.quiet:
            status = "ok" if not result.any_failure else f"FAILED {sorted(result.failures)}"
            print(f"trial {result.trial_id:5d} [{result.truth}] {status}", flush=True)

    results, manifest = run_design(config, progress=progress)
    n_failed = len(manifest["failed_trials"])
    print(f"completed {len(results)} trials ({n_failed} with engine failures)")
    if config.outdir:
        print(f"results table: {Path(config.outdir) / 'results.jsonl'}")
    return EXIT_OK


def _read_panels(path, log_transform):
    panels, _ = ingest_csv(path, log_transform=log_transform)
    return panels


def _cmd_evaluate(args):
    spec_path, unknown_path, alt_path = args.case
    spec_panels = _read_panels(spec_path, args.log_transform)
    unknown_panels = _read_panels(unknown_path, args.log_transform)
    alt_panels = _read_panels(alt_path, args.log_transform)
    if len(spec_panels) != 1 or len(unknown_panels) != 1:
        raise SchemaError("specific and unknown files must each contain exactly one source")
    case = CaseBundle(
        spec_panels[0], unknown_panels[0], AlternativeDataset(tuple(alt_panels))
    )
    methods = {
        "gff": ("gff",),
        "bf": ("bf_p", "bf_d"),
        "lr": ("lr",),
        "all": ("gff", "bf_p", "bf_d", "lr"),
    }[args.method]
    engines = PAPER_ENGINES if args.scale == "paper" else DESK_ENGINES
    out = evaluate_case(case, engines=engines, seed=args.seed, methods=methods)
    print(json.dumps(out, indent=2, sort_keys=True, default=_json_fallback))
    return EXIT_OK


def _json_fallback(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _cmd_diagnose(args):
    results = load_results(args.results)
    paths = emit_plot_data(results, args.kind, args.outdir, seed=args.seed)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_ingest(args):
    panels, elements = ingest_csv(args.csv, log_transform=args.log_transform)
    n_rows = sum(p.n_rows for p in panels)
    counts = sorted({p.n_rows for p in panels})
    print(
        f"{args.csv}: {len(panels)} sources, {n_rows} fragments, "
        f"{len(elements)} elements, fragments-per-source {counts}"
    )
    if args.out:
        from .data import export_csv

        export_csv(panels, elements, args.out)
        print(f"normalized panels written to {args.out}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "simulate": _cmd_simulate,
        "evaluate": _cmd_evaluate,
        "diagnose": _cmd_diagnose,
        "ingest": _cmd_ingest,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, NonPositiveConcentration, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FidsourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
