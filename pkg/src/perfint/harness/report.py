"""Report files: report.json, costs.csv, scenarios.csv, ablation.csv."""

from __future__ import annotations

import json
from pathlib import Path

from .experiment import ReportBundle

COST_COLUMNS = ("method", "predictor", "alpha", "mean_cost", "ci_low", "ci_high", "n_scenarios")
SCENARIO_COLUMNS = ("id", "dataset", "predictor", "alpha", "method", "true_accuracy",
                    "predicted_accuracy", "lower", "upper", "delta", "width", "cost")


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(bundle: ReportBundle, out_dir, formats=("json", "csv")) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    written = []
    if "json" in formats:
        p = out / "report.json"
        p.write_text(json.dumps(bundle.to_dict(), indent=1, sort_keys=True))
        written.append(p)
    if "csv" in formats:
        p = out / "costs.csv"
        with open(p, "w") as fh:
            fh.write(",".join(COST_COLUMNS) + "\n")
            for c in bundle.costs:
                fh.write(",".join(_fmt(getattr(c, k)) for k in COST_COLUMNS) + "\n")
        written.append(p)
        p = out / "scenarios.csv"
        with open(p, "w") as fh:
            fh.write(",".join(SCENARIO_COLUMNS) + "\n")
            for s in bundle.scenarios:
                fh.write(",".join(_fmt(getattr(s, k)) for k in SCENARIO_COLUMNS) + "\n")
        written.append(p)
        if bundle.ablation:
            p = out / "ablation.csv"
            write_ablation_csv(bundle.ablation, p)
            written.append(p)
    return written


def write_ablation_csv(ablation: dict, path):
    with open(path, "w") as fh:
        fh.write("type," + ",".join(ablation["cols"]) + "\n")
        for row in ablation["rows"]:
            cells = ablation["grid"].get(row, {})
            vals = []
            for col in ablation["cols"]:
                c = cells.get(col)
                vals.append("" if c is None else _fmt(c["normalized"]))
            fh.write(row + "," + ",".join(vals) + "\n")


def load_report(path) -> ReportBundle:
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    return ReportBundle.from_dict(json.loads(p.read_text()))
