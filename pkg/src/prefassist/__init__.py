"""Preference-aware assistance learning and cross-hand transfer, desk scale."""

__version__ = "0.1.0"

from .hands import (GraspVector, HandSchema, TaskLabel, fingertip_fk,
                    generate_command_set, make_schema, map_human_to_robot,
                    project_to_feasible)
from .intent import TaskGaussianLibrary, fit_library, infer_intent, likelihood, posterior
from .strategies import (DivergenceProfile, SolverConfig, StrategyOutput,
                         divergence_profile, solve_hybrid, solve_intent, solve_mimic)
from .features import FeatureScaler, TrialFeatures, featurize
from .network import NetworkModel, deserialize, forward, init_network, rerank, serialize, train_step
from .smu import (LabeledDataset, LabeledRecord, SmuConfig, TrainingCurve,
                  accuracy, rms_error, stability_metrics, train_baseline,
                  train_smu, weight_kl)
from .evaluators import EvaluatorArchetype, EvaluatorPanel, bayes_accuracy, build_panel, generate_labels
from .transfer import (TransferConfig, apply_transfer, refine, transfer_direct,
                       transfer_enhanced, transfer_negative, transfer_positive)
