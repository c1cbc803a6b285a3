"""End-to-end experiment pipeline and file I/O.

Stages: materialize the scenario (schemas, task Gaussians, divergence
profiles), generate human commands, solve the three strategies per command
per robot, interpret features, label trials with the synthetic panel, train
(stagewise + baseline), transfer, refine, and evaluate.  Every stage draws
from a named substream of the master seed, and files are written atomically
(temp file + rename) with deterministic bytes, so a rerun with the same seed
reproduces every artifact exactly.

File formats owned here:
  dataset_<robot>.jsonl / eval_<robot>.jsonl - one record per trial-evaluator
  model files   - versioned JSON (see network.serialize)
  curve files   - RFC-4180 CSV: stage, metric, val_accuracy, provenance, kl
  gen_summary.json - record counts and exact panel ceilings per robot/task
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .config import ExperimentConfig
from .evaluators import EvaluatorArchetype, EvaluatorPanel, bayes_accuracy, build_panel, generate_labels
from .features import TrialFeatures, featurize
from .hands import GraspVector, TaskLabel, generate_command_set, map_human_to_robot
from .intent import TaskGaussianLibrary, fit_library, infer_intent
from .network import NetworkModel, deserialize, serialize, with_metadata
from .rngutil import substream
from .smu import (LabeledDataset, LabeledRecord, TrainingCurve, accuracy,
                  flexible_accuracy, train_baseline, train_smu)
from .strategies import divergence_profile, solve_hybrid, solve_intent, solve_mimic
from .transfer import apply_transfer, refine

ROBOTS = ("robot3", "robot2")
METRICS = ("smupa", "smupe", "smuwt")
TRANSFER_METHODS = ("direct", "trpw", "trnw", "trew")


def _seed_int(master_seed: int, *path) -> int:
    return int(substream(master_seed, *path).integers(1 << 62))


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Scenario:
    """Materialized scenario: fitted libraries and divergence profiles."""

    config: ExperimentConfig
    libraries: dict      # side -> TaskGaussianLibrary
    profiles: dict       # robot side -> DivergenceProfile
    panel: EvaluatorPanel


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    """Fit per-side task libraries and robot-vs-human divergence profiles."""
    scn = cfg.scenario
    libraries = {}
    sample_sets = {}
    for side in ("human", "robot3", "robot2"):
        sampler = scn.sampler(side)
        per_task = []
        for task in TaskLabel:
            grasps = generate_command_set(
                sampler, task, scn.library_samples,
                substream(cfg.master_seed, "scenario", side, task.value))
            per_task.append(np.asarray([g.values for g in grasps]))
        sample_sets[side] = per_task
        libraries[side] = fit_library(per_task, side=side,
                                      task_names=tuple(t.value for t in TaskLabel))

    human_schema = scn.schemas["human"]
    profiles = {}
    for robot in ROBOTS:
        robot_pool = np.vstack(sample_sets[robot])
        mapped = []
        for task_samples in sample_sets["human"]:
            for row in task_samples:
                g = GraspVector(human_schema, row)
                mapped.append(map_human_to_robot(g, scn.schemas[robot]).values)
        profiles[robot] = divergence_profile(robot_pool, np.asarray(mapped))

    archetypes = [EvaluatorArchetype(a["name"],
                                     {TaskLabel(k): np.asarray(v) for k, v in a["weights"].items()},
                                     {TaskLabel(k): float(v) for k, v in a["share"].items()})
                  for a in cfg.panel.archetypes]
    panel = build_panel(archetypes, cfg.panel.beta, cfg.panel.size,
                        cfg.panel.jitter_sigma,
                        substream(cfg.master_seed, "panel"))
    return Scenario(cfg, libraries, profiles, panel)


def solve_command(scenario: Scenario, robot: str, task: TaskLabel,
                  command: GraspVector, command_id: str, solver_seed: int) -> TrialFeatures:
    """Run all three strategies on one command and interpret the features."""
    cfg = scenario.config
    schema = cfg.scenario.schemas[robot]
    robot_lib = scenario.libraries[robot]
    profile = scenario.profiles[robot]
    intent_vec = infer_intent(command, scenario.libraries["human"])

    solver_cfg = replace(cfg.solver, seed=solver_seed)
    mimic_out = solve_mimic(command, schema, robot_lib, intent_vec)
    intent_out = solve_intent(intent_vec, schema, robot_lib, solver_cfg,
                              command=command)
    hybrid_out = solve_hybrid(intent_vec, command, profile, schema, robot_lib,
                              replace(solver_cfg, seed=solver_seed + 1),
                              extra_starts=[intent_out.values, mimic_out.values])
    return featurize(command_id, task, command, intent_vec,
                     (intent_out, mimic_out, hybrid_out), profile)


def generate_trials(scenario: Scenario, robot: str, eval_set: bool = False) -> list:
    """Commands for every task, solved and featurized for one robot.

    The command sets are shared across robots (same human motions drive both
    hands); the evaluation set uses its own command substream.
    """
    cfg = scenario.config
    scn = cfg.scenario
    sampler = scn.sampler("human")
    count = scn.eval_commands_per_task if eval_set else scn.commands_per_task
    stream = "commands-eval" if eval_set else "commands"
    prefix = "ev" if eval_set else "cmd"
    trials = []
    for task in TaskLabel:
        commands = generate_command_set(
            sampler, task, count, substream(cfg.master_seed, stream, task.value))
        for i, command in enumerate(commands):
            command_id = f"{task.value}-{prefix}{i:03d}"
            seed = _seed_int(cfg.master_seed, "solver", robot, stream, task.value, i)
            trials.append(solve_command(scenario, robot, task, command,
                                        command_id, seed))
    return trials


# ---------------------------------------------------------------------------
# Atomic, deterministic file I/O
# ---------------------------------------------------------------------------

def write_atomic(path: str, data: bytes):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def record_to_doc(rec: LabeledRecord) -> dict:
    return {
        "trial_id": rec.trial_id,
        "task": rec.task.value,
        "evaluator_id": rec.evaluator_id,
        "features": rec.features.tolist(),
        "rank": rec.rank.tolist(),
        "robot": rec.robot,
        "presented": rec.presented,
    }


_RECORD_KEYS = {"trial_id", "task", "evaluator_id", "features", "rank",
                "robot", "presented"}


def record_from_doc(doc: dict) -> LabeledRecord:
    missing = _RECORD_KEYS - set(doc)
    if missing:
        raise ValueError(f"dataset record missing keys {sorted(missing)}")
    return LabeledRecord(str(doc["trial_id"]), TaskLabel(doc["task"]),
                         np.asarray(doc["features"], dtype=float),
                         np.asarray(doc["rank"], dtype=np.int64),
                         int(doc["evaluator_id"]), str(doc["robot"]),
                         int(doc["presented"]))


def dataset_to_jsonl(dataset: LabeledDataset) -> bytes:
    lines = [json.dumps(record_to_doc(r), sort_keys=True, separators=(",", ":"))
             for r in dataset.records]
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_dataset(path: str) -> LabeledDataset:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_doc(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: bad record: {exc}") from exc
    return LabeledDataset(records)


def curve_to_csv(curve: TrainingCurve, metric: str) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["stage", "metric", "val_accuracy", "provenance", "kl_value"])
    for rec in curve.records:
        kl = "" if np.isnan(rec.kl_value) else repr(rec.kl_value)
        writer.writerow([rec.stage, metric, repr(rec.val_accuracy),
                         rec.provenance, kl])
    return buf.getvalue().encode("utf-8")


def load_curve_accuracies(path: str) -> np.ndarray:
    """Validation accuracy sequence from a curve CSV."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return np.asarray([float(row["val_accuracy"]) for row in reader])


def table_to_csv(header: list, rows: list) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# Pipeline commands (the CLI wraps these)
# ---------------------------------------------------------------------------

def dataset_path(out_dir: str, robot: str, eval_set: bool = False) -> str:
    name = f"eval_{robot}.jsonl" if eval_set else f"dataset_{robot}.jsonl"
    return os.path.join(out_dir, name)


def model_path(out_dir: str, task: TaskLabel, metric: str, seed: int) -> str:
    return os.path.join(out_dir, f"model_{task.value}_{metric}_seed{seed}.json")


def curve_path(out_dir: str, task: TaskLabel, metric: str, seed: int,
               baseline: bool = False) -> str:
    kind = "curve_baseline" if baseline else "curve"
    return os.path.join(out_dir, f"{kind}_{task.value}_{metric}_seed{seed}.csv")


def transfer_model_path(out_dir: str, task: TaskLabel, method: str, seed: int) -> str:
    return os.path.join(out_dir, f"model2f_{task.value}_{method}_seed{seed}.json")


def refined_model_path(out_dir: str, task: TaskLabel, method: str, seed: int) -> str:
    return os.path.join(out_dir, f"model2f_{task.value}_refined-{method}_seed{seed}.json")


def refine_curve_path(out_dir: str, task: TaskLabel, method: str, seed: int) -> str:
    return os.path.join(out_dir, f"curve_refine_{task.value}_{method}_seed{seed}.csv")


def cmd_gen(cfg: ExperimentConfig) -> dict:
    """Generate, solve, featurize, and label the full dataset; write files."""
    scenario = build_scenario(cfg)
    summary = {"record_counts": {}, "bayes": {}}
    for robot in ROBOTS:
        trials = generate_trials(scenario, robot, eval_set=False)
        eval_trials = generate_trials(scenario, robot, eval_set=True)
        labels = generate_labels(trials, scenario.panel,
                                 substream(cfg.master_seed, "labels", robot))
        eval_labels = generate_labels(eval_trials, scenario.panel,
                                      substream(cfg.master_seed, "labels-eval", robot))
        write_atomic(dataset_path(cfg.out_dir, robot), dataset_to_jsonl(labels))
        write_atomic(dataset_path(cfg.out_dir, robot, eval_set=True),
                     dataset_to_jsonl(eval_labels))
        summary["record_counts"][robot] = {
            "train": len(labels.records), "eval": len(eval_labels.records)}
        per_task = {}
        for task in TaskLabel:
            task_eval = [t for t in eval_trials if t.task == task]
            per_task[task.value] = bayes_accuracy(scenario.panel, task_eval)
        per_task["mean"] = float(np.mean([per_task[t.value] for t in TaskLabel]))
        summary["bayes"][robot] = per_task
    blob = json.dumps(summary, indent=2, sort_keys=True).encode("utf-8")
    write_atomic(os.path.join(cfg.out_dir, "gen_summary.json"), blob)
    return summary


def train_task(cfg: ExperimentConfig, dataset: LabeledDataset, task: TaskLabel,
               metric: str, run_seed: int) -> tuple[TrainingCurve, TrainingCurve]:
    """Stagewise + baseline training for one task on the 3-finger data."""
    records = dataset.for_task(task).records
    smu_cfg = replace(cfg.smu, metric=metric,
                      seed=_seed_int(cfg.master_seed, "trainer", task.value, metric, run_seed))
    curve = train_smu(records, smu_cfg)
    schema = cfg.scenario.schemas["robot3"]
    curve.final_model = with_metadata(curve.final_model, task=task.value,
                                      metric=metric, robot=schema.name,
                                      schema=schema.fingerprint, run_seed=run_seed)
    base_cfg = replace(cfg.smu, metric=metric,
                       seed=_seed_int(cfg.master_seed, "trainer-baseline", task.value, run_seed))
    baseline = train_baseline(records, base_cfg)
    return curve, baseline


def cmd_train(cfg: ExperimentConfig, task: TaskLabel, metric: str,
              run_seed: int) -> dict:
    """CLI train cell: loads the 3-finger dataset, writes model + curves."""
    dataset = load_dataset(dataset_path(cfg.out_dir, "robot3"))
    curve, baseline = train_task(cfg, dataset, task, metric, run_seed)
    write_atomic(model_path(cfg.out_dir, task, metric, run_seed),
                 serialize(curve.final_model))
    write_atomic(curve_path(cfg.out_dir, task, metric, run_seed),
                 curve_to_csv(curve, metric))
    write_atomic(curve_path(cfg.out_dir, task, metric, run_seed, baseline=True),
                 curve_to_csv(baseline, "baseline"))
    eval_ds = load_dataset(dataset_path(cfg.out_dir, "robot3", eval_set=True))
    eval_records = eval_ds.for_task(task).records
    return {"task": task.value, "metric": metric, "seed": run_seed,
            "eval_accuracy": accuracy(curve.final_model, eval_records)}


def cmd_transfer(cfg: ExperimentConfig, task: TaskLabel, method: str,
                 run_seed: int) -> dict:
    """Transfer the learned 3-finger model and evaluate it on 2-finger data."""
    source_path = model_path(cfg.out_dir, task, cfg.transfer.source_metric, run_seed)
    if not os.path.exists(source_path):
        raise FileNotFoundError(f"missing source model {source_path}; run train first")
    with open(source_path, "rb") as fh:
        source = deserialize(fh.read())
    target_schema = cfg.scenario.schemas["robot2"]
    transferred = apply_transfer(source, method, target_schema, cfg.transfer)
    write_atomic(transfer_model_path(cfg.out_dir, task, method, run_seed),
                 serialize(transferred))
    eval_ds = load_dataset(dataset_path(cfg.out_dir, "robot2", eval_set=True))
    eval_records = eval_ds.for_task(task).records
    flex = flexible_accuracy(transferred, eval_records)
    return {"task": task.value, "method": method, "seed": run_seed,
            "eval_accuracy": flex["exact"], "flexible": flex}


def cmd_refine(cfg: ExperimentConfig, task: TaskLabel, method: str,
               run_seed: int) -> dict:
    """Refine a transferred model on a stratified half of the 2-finger data."""
    path = transfer_model_path(cfg.out_dir, task, method, run_seed)
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing transferred model {path}; run transfer first")
    with open(path, "rb") as fh:
        transferred = deserialize(fh.read())
    dataset = load_dataset(dataset_path(cfg.out_dir, "robot2"))
    records = dataset.for_task(task).records
    smu_cfg = replace(cfg.smu, metric="smuwt", stages=cfg.transfer.refine_stages,
                      seed=_seed_int(cfg.master_seed, "refine", task.value, method, run_seed))
    curve = refine(transferred, records, smu_cfg, cfg.transfer.refine_fraction)
    schema = cfg.scenario.schemas["robot2"]
    curve.final_model = with_metadata(curve.final_model, task=task.value,
                                      robot=schema.name, schema=schema.fingerprint,
                                      refined_from=method, run_seed=run_seed)
    write_atomic(refined_model_path(cfg.out_dir, task, method, run_seed),
                 serialize(curve.final_model))
    write_atomic(refine_curve_path(cfg.out_dir, task, method, run_seed),
                 curve_to_csv(curve, "smuwt"))
    eval_ds = load_dataset(dataset_path(cfg.out_dir, "robot2", eval_set=True))
    eval_records = eval_ds.for_task(task).records
    return {"task": task.value, "method": method, "seed": run_seed,
            "eval_accuracy": accuracy(curve.final_model, eval_records)}


def cmd_sweep_threshold(cfg: ExperimentConfig, grid, task: TaskLabel,
                        run_seed: int) -> list:
    """Run smuwt across a kl-threshold grid; count rollbacks per threshold."""
    dataset = load_dataset(dataset_path(cfg.out_dir, "robot3"))
    records = dataset.for_task(task).records
    rows = []
    for threshold in grid:
        smu_cfg = replace(cfg.smu, metric="smuwt", kl_threshold=float(threshold),
                          seed=_seed_int(cfg.master_seed, "trainer", task.value,
                                         "smuwt", run_seed))
        curve = train_smu(records, smu_cfg)
        kl_rollbacks = sum(1 for r in curve.records
                           if r.provenance == "rollback" and r.kl_value > threshold)
        rollbacks = sum(1 for r in curve.records if r.provenance == "rollback")
        rows.append({"task": task.value, "seed": run_seed,
                     "kl_threshold": float(threshold),
                     "final_accuracy": curve.records[-1].val_accuracy,
                     "kl_rollbacks": kl_rollbacks, "rollbacks": rollbacks})
    return rows


def select_assistance(rank: np.ndarray, policy: str, task_reward=None) -> int:
    """Pick a strategy index from a predicted rank vector.

    most-preferred: the rank-1 strategy.  avoid-least: excludes the rank-n
    strategy and picks the reward-maximizing remainder (default reward
    prefers the rank-1 choice).
    """
    rank = np.asarray(rank)
    n = rank.shape[0]
    if policy == "most-preferred":
        return int(np.argmax(rank == 1))
    if policy == "avoid-least":
        candidates = [i for i in range(n) if rank[i] != n]
        if task_reward is None:
            return min(candidates, key=lambda i: rank[i])
        reward = np.asarray(task_reward, dtype=float)
        best = max(candidates, key=lambda i: (reward[i], -i))
        return int(best)
    raise ValueError(f"unknown policy {policy!r}")
