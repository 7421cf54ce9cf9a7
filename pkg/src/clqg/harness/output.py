"""Deterministic persistence of experiment results."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import clqg
from clqg import bessel, concentric, gauge, gff, hausdorff
from clqg.gff import write_field_bin
from clqg.harness.config import ExperimentConfig, dump_config
from clqg.harness.experiments import RUNNERS, Outcome

TOLERANCES = {
    "concentric.residual": concentric.RESIDUAL_TOL,
    "concentric.direct_below": concentric.DIRECT_BELOW,
    "gauge.phi_rtol": 1e-7,
    "gauge.validation_points": gauge.VALIDATION_POINTS,
    "gauge.validation_t_max": gauge.VALIDATION_T_MAX,
    "gauge.tail_cap": gauge.TAIL_CAP,
    "gff.dense_cap": gff.DENSE_CAP,
    "bessel.fine_step": bessel.FINE_STEP,
    "bessel.coarse_step": bessel.COARSE_STEP,
    "bessel.rejection_budget": bessel.DEFAULT_BUDGET,
    "hausdorff.max_level": hausdorff.MAX_LEVEL,
    "hausdorff.quorum": 0.9,
}


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _cell(v.item())
    return str(v)


def write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def summary_record(cfg: ExperimentConfig, out: Outcome) -> dict:
    return {
        "experiment": cfg.experiment,
        "version": clqg.__version__,
        "config_hash": cfg.config_hash(),
        "config": cfg.canonical().splitlines(),
        "tolerances": TOLERANCES,
        "results": out.results,
    }


def run_experiment(cfg: ExperimentConfig) -> Outcome:
    """Run and write rows.csv, summary.json, config.txt (and field.bin on request)."""
    out = RUNNERS[cfg.experiment](cfg)
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_rows(d / "rows.csv", out.columns, out.rows)
    with open(d / "summary.json", "w") as fh:
        json.dump(_clean(summary_record(cfg, out)), fh, indent=2, sort_keys=True)
        fh.write("\n")
    (d / "config.txt").write_text(dump_config(cfg))
    if cfg.save_field and out.field is not None:
        write_field_bin(out.field, d / "field.bin")
    return out
