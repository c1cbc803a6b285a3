"""Report assembly: accuracy matrix, stability statistics, flexible metrics.

Aggregates whatever (task, metric, method, seed) cells exist in a run
directory into mean +/- std tables.  The Average column is always recomputed
from the row's task cells, never read from anywhere.  Missing cells are
reported explicitly and flagged as incomplete.
"""

from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .hands import TaskLabel
from .network import deserialize
from .pipeline import (curve_path, dataset_path, load_curve_accuracies,
                       model_path, refined_model_path, transfer_model_path,
                       write_atomic)
from .smu import flexible_accuracy, stability_metrics

# Table column order follows the write-up convention: Hand Over, Move, Use.
TASK_ORDER = (TaskLabel.HAND_OVER, TaskLabel.MOVE, TaskLabel.USE)
MATRIX_ROWS = ("learned-3f", "direct", "trpw", "trnw", "trew", "refined")
METRICS = ("smupa", "smupe", "smuwt")


@dataclass(eq=False)
class ReportBundle:
    accuracy_rows: list = field(default_factory=list)   # (row, task -> (mean, std))
    stability_rows: list = field(default_factory=list)
    flexible_rows: list = field(default_factory=list)
    missing: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing


def _discover_seeds(out_dir: str) -> list[int]:
    seeds = set()
    pattern = re.compile(r"_seed(\d+)\.(json|csv)$")
    if os.path.isdir(out_dir):
        for name in os.listdir(out_dir):
            m = pattern.search(name)
            if m:
                seeds.add(int(m.group(1)))
    return sorted(seeds)


def _model_file_for(cfg: ExperimentConfig, row: str, task: TaskLabel, seed: int) -> str:
    if row == "learned-3f":
        return model_path(cfg.out_dir, task, cfg.transfer.source_metric, seed)
    if row == "refined":
        return refined_model_path(cfg.out_dir, task, cfg.transfer.method, seed)
    return transfer_model_path(cfg.out_dir, task, row, seed)


def build_report(cfg: ExperimentConfig) -> ReportBundle:
    """Evaluate all present models on the held-out command sets and collect
    curve statistics; record what is missing instead of failing."""
    bundle = ReportBundle()
    seeds = _discover_seeds(cfg.out_dir)
    if not seeds:
        bundle.missing.append("no run files (no *_seed*.json in out_dir)")
        return bundle

    eval_records = {}
    for robot in ("robot3", "robot2"):
        path = dataset_path(cfg.out_dir, robot, eval_set=True)
        if not os.path.exists(path):
            bundle.missing.append(os.path.basename(path))
            continue
        from .pipeline import load_dataset

        ds = load_dataset(path)
        for task in TaskLabel:
            eval_records[(robot, task)] = ds.for_task(task).records

    for row in MATRIX_ROWS:
        robot = "robot3" if row == "learned-3f" else "robot2"
        cells = {}
        flex_cells = {"exact": [], "top2": [], "least": []}
        for task in TASK_ORDER:
            per_seed = []
            for seed in seeds:
                path = _model_file_for(cfg, row, task, seed)
                if not os.path.exists(path):
                    bundle.missing.append(os.path.basename(path))
                    continue
                if (robot, task) not in eval_records:
                    continue
                with open(path, "rb") as fh:
                    model = deserialize(fh.read())
                flex = flexible_accuracy(model, eval_records[(robot, task)])
                per_seed.append(flex)
            if per_seed:
                cells[task] = (float(np.mean([f["exact"] for f in per_seed])),
                               float(np.std([f["exact"] for f in per_seed])))
                for key in flex_cells:
                    flex_cells[key].extend(f[key] for f in per_seed)
        bundle.accuracy_rows.append((row, cells))
        if any(flex_cells.values()):
            bundle.flexible_rows.append(
                (row, {k: (float(np.mean(v)), float(np.std(v))) for k, v in flex_cells.items() if v}))

    for metric in METRICS:
        for task in TASK_ORDER:
            sig_s, d_s, sig_b, d_b = [], [], [], []
            for seed in seeds:
                smu_file = curve_path(cfg.out_dir, task, metric, seed)
                base_file = curve_path(cfg.out_dir, task, metric, seed, baseline=True)
                for path, sig, d in ((smu_file, sig_s, d_s), (base_file, sig_b, d_b)):
                    if not os.path.exists(path):
                        bundle.missing.append(os.path.basename(path))
                        continue
                    s2, deg = stability_metrics(load_curve_accuracies(path))
                    sig.append(s2)
                    d.append(deg)
            if sig_s and sig_b:
                bundle.stability_rows.append({
                    "metric": metric, "task": task.value,
                    "sigma2_smu": float(np.mean(sig_s)),
                    "sigma2_base": float(np.mean(sig_b)),
                    "d_smu": float(np.mean(d_s)),
                    "d_base": float(np.mean(d_b)),
                })
    bundle.missing = sorted(set(bundle.missing))
    return bundle


def _fmt_cell(cell) -> str:
    if cell is None:
        return "incomplete"
    mean, std = cell
    return f"{mean:.3f} ± {std:.3f}"


def render_markdown(bundle: ReportBundle, cfg: ExperimentConfig) -> str:
    lines = ["# Run report", ""]
    lines.append("Accuracy on the held-out command sets (exact rank match, "
                 "mean ± std across seeds). The 3-finger row is evaluated on "
                 "3-finger data, every other row on 2-finger data.")
    lines.append("")
    header = ["model"] + [t.value for t in TASK_ORDER] + ["average"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for row, cells in bundle.accuracy_rows:
        vals = [cells.get(t) for t in TASK_ORDER]
        present = [v[0] for v in vals if v is not None]
        avg = (float(np.mean(present)), float(np.std(present))) if len(present) == len(TASK_ORDER) else None
        lines.append("| " + " | ".join([row] + [_fmt_cell(v) for v in vals]
                                       + [_fmt_cell(avg)]) + " |")
    lines.append("")
    lines.append("Training stability per metric and task "
                 "(variance from the second stage on; cumulative degradation).")
    lines.append("")
    lines.append("| metric | task | sigma2 smu | sigma2 base | D smu | D base |")
    lines.append("|---|---|---|---|---|---|")
    for r in bundle.stability_rows:
        lines.append("| {metric} | {task} | {sigma2_smu:.6f} | {sigma2_base:.6f} "
                     "| {d_smu:.4f} | {d_base:.4f} |".format(**r))
    lines.append("")
    lines.append("Flexible readings (top-2 set match and least-preferred match "
                 "alongside exact rank match), pooled over tasks and seeds.")
    lines.append("")
    lines.append("| model | exact | top-2 set | least-preferred |")
    lines.append("|---|---|---|---|")
    for row, cells in bundle.flexible_rows:
        lines.append("| " + " | ".join(
            [row] + [_fmt_cell(cells.get(k)) for k in ("exact", "top2", "least")]) + " |")
    lines.append("")
    if bundle.missing:
        lines.append("## INCOMPLETE")
        lines.append("")
        for item in bundle.missing:
            lines.append(f"- missing: {item}")
        lines.append("")
    return "\n".join(lines) + "\n"


def write_report(bundle: ReportBundle, cfg: ExperimentConfig):
    from .pipeline import table_to_csv

    write_atomic(os.path.join(cfg.out_dir, "report.md"),
                 render_markdown(bundle, cfg).encode("utf-8"))

    acc_rows = []
    for row, cells in bundle.accuracy_rows:
        vals = [cells.get(t) for t in TASK_ORDER]
        present = [v[0] for v in vals if v is not None]
        csv_row = [row]
        for v in vals:
            csv_row.extend(["" if v is None else v[0], "" if v is None else v[1]])
        if len(present) == len(TASK_ORDER):
            csv_row.extend([float(np.mean(present)), float(np.std(present))])
        else:
            csv_row.extend(["", ""])
        acc_rows.append(csv_row)
    header = ["model"]
    for t in TASK_ORDER:
        header.extend([f"{t.value}_mean", f"{t.value}_std"])
    header.extend(["average_mean", "average_std"])
    write_atomic(os.path.join(cfg.out_dir, "report_accuracy.csv"),
                 table_to_csv(header, acc_rows))

    stab_rows = [[r["metric"], r["task"], r["sigma2_smu"], r["sigma2_base"],
                  r["d_smu"], r["d_base"]] for r in bundle.stability_rows]
    write_atomic(os.path.join(cfg.out_dir, "report_stability.csv"),
                 table_to_csv(["metric", "task", "sigma2_smu", "sigma2_base",
                               "d_smu", "d_base"], stab_rows))

    flex_rows = []
    for row, cells in bundle.flexible_rows:
        csv_row = [row]
        for key in ("exact", "top2", "least"):
            cell = cells.get(key)
            csv_row.extend(["" if cell is None else cell[0],
                            "" if cell is None else cell[1]])
        flex_rows.append(csv_row)
    write_atomic(os.path.join(cfg.out_dir, "report_flexible.csv"),
                 table_to_csv(["model", "exact_mean", "exact_std", "top2_mean",
                               "top2_std", "least_mean", "least_std"], flex_rows))
