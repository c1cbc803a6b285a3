"""Synthetic evaluator panel: archetype utilities plus Plackett-Luce noise.

Each evaluator scores a trial's strategies by a weighted cost over the four
raw features (lower cost = higher utility) and samples a ranking from a
Plackett-Luce distribution at temperature beta.  Archetypes give the panel
structured disagreement: different populations weight the features
differently, and task-dependent shares let consensus strength vary by task.
Labels are therefore ambiguous in a controlled way, and ``bayes_accuracy``
puts an exact ceiling on what any predictor can score against them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .features import STRATEGY_ORDER, TrialFeatures
from .hands import TaskLabel
from .rngutil import as_generator, substream
from .smu import LabeledDataset, LabeledRecord

PANEL_SIZE = 20
FEATURE_COUNT = 4


@dataclass(frozen=True, eq=False)
class EvaluatorArchetype:
    """A preference style: per-task feature weights and population share."""

    name: str
    weights: dict    # TaskLabel -> (4,) non-negative array
    share: dict      # TaskLabel -> population share

    def __post_init__(self):
        fixed = {}
        for task, w in self.weights.items():
            arr = np.array(w, dtype=float, order="C")
            if arr.shape != (FEATURE_COUNT,) or np.any(arr < 0):
                raise ValueError("archetype weights must be 4 non-negative values")
            arr.setflags(write=False)
            fixed[task] = arr
        object.__setattr__(self, "weights", fixed)


@dataclass(frozen=True, eq=False)
class Evaluator:
    evaluator_id: int
    weights: dict     # TaskLabel -> (4,) jittered weights
    archetype: dict   # TaskLabel -> archetype name


@dataclass(frozen=True, eq=False)
class EvaluatorPanel:
    evaluators: tuple
    beta: float
    seed: int

    def __post_init__(self):
        if len(self.evaluators) == 0:
            raise ValueError("panel must contain evaluators")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def __len__(self) -> int:
        return len(self.evaluators)


def build_panel(archetypes, beta: float, size: int = PANEL_SIZE,
                jitter_sigma: float = 0.2, seed: int = 0) -> EvaluatorPanel:
    """Draw a panel: archetype per (evaluator, task), then weight jitter.

    Jitter is multiplicative log-normal so weights stay non-negative and
    every evaluator is distinct.
    """
    tasks = list(archetypes[0].weights.keys())
    for task in tasks:
        total = sum(a.share[task] for a in archetypes)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"archetype shares for {task} must sum to 1")
    rng = as_generator(seed)
    evaluators = []
    for eid in range(size):
        weights = {}
        names = {}
        for task in tasks:
            shares = np.asarray([a.share[task] for a in archetypes])
            pick = archetypes[int(rng.choice(len(archetypes), p=shares))]
            jitter = np.exp(jitter_sigma * rng.standard_normal(FEATURE_COUNT))
            weights[task] = pick.weights[task] * jitter
            names[task] = pick.name
        evaluators.append(Evaluator(eid, weights, names))
    return EvaluatorPanel(tuple(evaluators),
                          beta, seed if isinstance(seed, int) else -1)


def utilities(evaluator: Evaluator, task: TaskLabel, trial: TrialFeatures) -> np.ndarray:
    """Per-strategy utility: negated weighted feature cost."""
    w = evaluator.weights[task]
    return np.asarray([-float(w @ trial.raw_feature(s)) for s in STRATEGY_ORDER])


def sample_ranking(u: np.ndarray, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Draw a rank permutation from the Plackett-Luce distribution.

    Positions are filled best-first, picking among the remaining strategies
    with probability proportional to exp(beta * utility).  beta = inf gives
    the deterministic utility argsort (ties to the lower index).
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    ranks = np.empty(n, dtype=np.int64)
    if math.isinf(beta):
        order = np.argsort(-u, kind="stable")
        ranks[order] = np.arange(1, n + 1)
        return ranks
    remaining = list(range(n))
    for position in range(1, n + 1):
        logits = beta * u[remaining]
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        pick = int(rng.choice(len(remaining), p=probs))
        ranks[remaining.pop(pick)] = position
    return ranks


def ranking_probability(u: np.ndarray, beta: float, order) -> float:
    """Exact Plackett-Luce probability of the ordering (best strategy first)."""
    u = np.asarray(u, dtype=float)
    if math.isinf(beta):
        best = np.argsort(-u, kind="stable")
        return 1.0 if tuple(best) == tuple(order) else 0.0
    remaining = list(range(u.shape[0]))
    prob = 1.0
    for idx in order:
        logits = beta * u[remaining]
        logits -= logits.max()
        weights = np.exp(logits)
        prob *= float(weights[remaining.index(idx)] / weights.sum())
        remaining.remove(idx)
    return prob


def generate_labels(trials, panel: EvaluatorPanel, seed) -> LabeledDataset:
    """Every evaluator labels every trial, in a per-evaluator random order.

    Records keep the presentation position; the dataset holds exactly
    len(trials) * len(panel) records and is deterministic per seed.
    """
    trials = list(trials)
    if len(trials) == 0:
        raise ValueError("no trials to label")
    rng = as_generator(seed)
    records = []
    for evaluator in panel.evaluators:
        order = rng.permutation(len(trials))
        for position, trial_idx in enumerate(order):
            trial = trials[int(trial_idx)]
            u = utilities(evaluator, trial.task, trial)
            rank = sample_ranking(u, panel.beta, rng)
            records.append(LabeledRecord(trial.command_id, trial.task,
                                         trial.x, rank, evaluator.evaluator_id,
                                         trial.robot, position))
    return LabeledDataset(records)


def rank_distribution(panel: EvaluatorPanel, trial: TrialFeatures) -> dict:
    """Exact label distribution of one trial under the panel.

    Averages each evaluator's Plackett-Luce probabilities over all
    permutations; keys are orderings (best strategy index first).
    """
    perms = list(itertools.permutations(range(len(STRATEGY_ORDER))))
    probs = {p: 0.0 for p in perms}
    for evaluator in panel.evaluators:
        u = utilities(evaluator, trial.task, trial)
        for p in perms:
            probs[p] += ranking_probability(u, panel.beta, p)
    return {p: v / len(panel) for p, v in probs.items()}


def bayes_accuracy(panel: EvaluatorPanel, trials) -> float:
    """Exact-rank accuracy of the best possible predictor for this panel.

    Per trial that is the probability of the modal ranking; enumerating all
    permutations keeps it exact.
    """
    trials = list(trials)
    if len(trials) == 0:
        raise ValueError("no trials")
    total = 0.0
    for trial in trials:
        total += max(rank_distribution(panel, trial).values())
    return total / len(trials)
