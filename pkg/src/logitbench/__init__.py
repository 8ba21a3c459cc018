"""Desk-scale workbench for studying softmax overconfidence: trains small
classifiers with cross-entropy, logit-norm, and logit-penalty losses, scores
inputs with four post-hoc OOD detectors, and reports detection/calibration
metrics."""

from .data import (LabeledDataset, OodDataset, corrupt_labels, gen_blobs,
                   gen_ood, load_delimited, split)
from .errors import (AllSeedsDiverged, ConfigError, ContractError, DataError,
                     DivergedError, ShapeError)
from .harness import (BenchmarkRow, ExperimentConfig, config_from_dict,
                      config_hash, desk_config, emit_histogram_data,
                      load_config, run_calibration, run_experiment, sweep_tau)
from .losses import (LossConfig, cross_entropy, logit_penalty_loss,
                     logitnorm_loss, logitnorm_lower_bound)
from .metrics import (CalibrationReport, DetectionReport, aupr, auroc, ece,
                      fit_temperature, fpr_at_tpr)
from .model import (LogitDecomposition, MlpModel, decompose, forward,
                    forward_traced, init_model, load_checkpoint, save_checkpoint)
from .optimizer import EpochTelemetry, OptimConfig, lr_at, train
from .scores import (ScoreConfig, ScoredExample, energy_score, gradnorm_score,
                     msp_score, odin_score, read_scores, score_batch, write_scores)
from .tensor import GradTape, Matrix2D, matmul, row_l2_norm, rowwise_softmax

__version__ = "0.1.0"
