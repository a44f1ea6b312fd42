"""Occlusion-consistency regularization lab.

Train small classifiers with the masked-input symmetric-KL regularizer,
generate local linear explanations, score them with five quality metrics,
and compare configurations with a Bayesian signed test.
"""

from .data import Dataset, load_idx, synth_shapes
from .errors import (DomainError, IdxFormatError, NonFiniteError, ShapeError,
                     TrainingDiverged)
from .estimator import ShieldClassifier, check_image_array
from .experiment import ExperimentConfig, run_experiment
from .explain import (ExplainParams, Explanation, explain, fit_lle,
                      repeat_explanations, sample_neighborhood)
from .masking import (FeatureMask, SegmentGrid, apply_mask, build_grid,
                      neutral_value, select_hidden)
from .models import (Adam, Classifier, build_classifier, cross_entropy,
                     load_checkpoint, save_checkpoint)
from .revel import (METRIC_NAMES, MetricReport, agreement, conciseness,
                    local_concordance, local_fidelity, prescriptivity, report,
                    robustness)
from .shield import ShieldConfig, kl_div, shield_term, total_objective
from .stats import (PairedDifferences, PosteriorTriple, rope_from_quantile,
                    signed_test, verdict)
from .tensor import GradientTape, Tensor, backward
from .training import RunManifest, TrainLog, evaluate, split, train
from .version import __version__

__all__ = [
    "Adam", "Classifier", "Dataset", "DomainError", "ExperimentConfig",
    "ExplainParams", "Explanation", "FeatureMask", "GradientTape",
    "IdxFormatError", "METRIC_NAMES", "MetricReport", "NonFiniteError",
    "PairedDifferences", "PosteriorTriple", "RunManifest", "SegmentGrid",
    "ShapeError", "ShieldClassifier", "ShieldConfig", "Tensor", "TrainLog",
    "TrainingDiverged", "__version__", "agreement", "apply_mask", "backward",
    "build_classifier", "build_grid", "check_image_array", "conciseness",
    "cross_entropy", "evaluate", "explain", "fit_lle", "kl_div",
    "load_checkpoint", "load_idx", "local_concordance", "local_fidelity",
    "neutral_value", "prescriptivity", "repeat_explanations", "report",
    "robustness", "rope_from_quantile", "run_experiment", "sample_neighborhood",
    "save_checkpoint", "select_hidden", "shield_term", "signed_test", "split",
    "synth_shapes", "total_objective", "train", "verdict",
]
