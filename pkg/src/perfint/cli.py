"""Command-line entry point: ``perfint {simulate,train-um,evaluate,ablate,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .harness import (
    ConfigError, ExperimentConfig, emit_report, generate_library, load_library, load_report,
    run_ablation, run_loo_experiment,
)
from .uncertainty import build_um_pipeline

log = logging.getLogger("perfint")


def _config(args, library=None) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.load(args.config)
    elif library is not None:
        cfg = ExperimentConfig.from_dict(library.config)
    else:
        raise ConfigError("a --config file is required")
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    return cfg


def cmd_simulate(args):
    cfg = _config(args)
    t = time.perf_counter()
    lib = generate_library(cfg, args.out, jobs=args.jobs)
    return {"scenarios": len(lib.scenario_ids()), "records": len(lib.records),
            "failures": len(lib.failures), "seconds": round(time.perf_counter() - t, 2),
            "library": str(args.out)}


def _library_and_config(args):
    if args.library:
        lib = load_library(args.library)
        cfg = _config(args, lib)
    else:
        cfg = _config(args)
        lib = generate_library(cfg, Path(args.out) / "library", jobs=args.jobs)
    return lib, cfg


def cmd_train_um(args):
    lib = load_library(args.library)
    cfg = _config(args, lib)
    recs = lib.select(predictor_kind=args.predictor, generator=cfg.train_generator,
                      exclude_dataset=args.exclude)
    if not recs:
        raise ConfigError(f"no {args.predictor} scenarios in library")
    X = [r.features for r in recs]
    d = [r.delta for r in recs]
    um, scale = build_um_pipeline(X, d, args.predictor, args.alpha, cfg.master_seed,
                                  scenario_ids=[r.id for r in recs], um_params=cfg.um.params,
                                  n_members=cfg.um.n_members, min_scenarios=cfg.um.min_scenarios)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "um.json").write_text(json.dumps(um.to_dict()))
    (out / "calibration.json").write_text(json.dumps(
        {"method": "tl_constant", "scale": scale, "alpha": args.alpha,
         "predictor_kind": args.predictor}, indent=1))
    return {"um": str(out / "um.json"), "scale": scale, "n_train": len(um.provenance["train_ids"])}


def cmd_evaluate(args):
    lib, cfg = _library_and_config(args)
    t = time.perf_counter()
    bundle = run_loo_experiment(lib, cfg)
    files = emit_report(bundle, args.out)
    return {"files": [str(f) for f in files], "seconds": round(time.perf_counter() - t, 2)}


def cmd_ablate(args):
    lib, cfg = _library_and_config(args)
    grid = run_ablation(lib, cfg, args.predictor, args.alpha)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(grid, indent=1))
    from .harness.report import write_ablation_csv
    write_ablation_csv(grid, out / "ablation.csv")
    return {"files": [str(out / "ablation.json"), str(out / "ablation.csv")],
            "all_features_cost": grid["all_features_cost"]}


def cmd_report(args):
    bundle = load_report(args.input)
    if args.ablation:
        bundle.ablation = json.loads(Path(args.ablation).read_text())
    files = emit_report(bundle, args.out, tuple(args.format.split(",")))
    return {"files": [str(f) for f in files]}


def build_parser():
    p = argparse.ArgumentParser(prog="perfint", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    sp = sub.add_parser("simulate", help="build a scenario library")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train-um", help="train one uncertainty model on a library")
    common(sp)
    sp.add_argument("--library", required=True)
    sp.add_argument("--predictor", default="meta_model")
    sp.add_argument("--alpha", type=float, default=0.9)
    sp.add_argument("--exclude", help="dataset id to leave out")
    sp.set_defaults(func=cmd_train_um)

    sp = sub.add_parser("evaluate", help="leave-one-out evaluation of UM and baselines")
    common(sp)
    sp.add_argument("--library", help="existing library (otherwise generated under OUT/library)")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("ablate", help="feature-group ablation grid")
    common(sp)
    sp.add_argument("--library")
    sp.add_argument("--predictor", default="meta_model")
    sp.add_argument("--alpha", type=float, default=0.9)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("report", help="re-emit report files from report.json")
    sp.add_argument("--input", required=True, help="report.json or its directory")
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", default="json,csv")
    sp.add_argument("--ablation", help="ablation.json to attach")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config_error", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.debug("command failed", exc_info=True)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
