"""Test-time mixup augmentation (TTMA) uncertainty estimation with TTA/MC-dropout baselines."""

from .augmentation import LAMBDA_MIN, AffineConfig, affine_augment, mixup_pair, sample_lambda
from .baselines import batch_baseline, mcdo_uncertainty, softmax_entropy, tta_uncertainty
from .class_analysis import (
    ClassRelationshipMatrix,
    afd,
    build_relationship_matrix,
    classify_relationship,
    cosine_distance,
)
from .core import (
    Dataset,
    LabeledSample,
    MixupDraw,
    RngStream,
    UncertaintyRecord,
    VoteHistogram,
    argmax_class,
    entropy,
    majority_vote,
    normalize_uncertainty,
    vote_fraction,
)
from .dataset import SyntheticSpec, generate_synthetic, load_dataset, preset, save_dataset, split
from .engine import InferredLabelSet, TtmaConfig, batch_estimate, infer_test_label, run_cdu, run_du
from .evaluation import accuracy_rejection_curve, ece, uncertainty_histograms
from .predictor import MLPClassifier, Predictor, TrainConfig, TrainingDiverged, train_reference

__version__ = "0.1.0"

__all__ = [
    "AffineConfig",
    "ClassRelationshipMatrix",
    "Dataset",
    "InferredLabelSet",
    "LAMBDA_MIN",
    "LabeledSample",
    "MLPClassifier",
    "MixupDraw",
    "Predictor",
    "RngStream",
    "SyntheticSpec",
    "TrainConfig",
    "TrainingDiverged",
    "TtmaConfig",
    "UncertaintyRecord",
    "VoteHistogram",
    "accuracy_rejection_curve",
    "afd",
    "affine_augment",
    "argmax_class",
    "batch_baseline",
    "batch_estimate",
    "build_relationship_matrix",
    "classify_relationship",
    "cosine_distance",
    "ece",
    "entropy",
    "generate_synthetic",
    "infer_test_label",
    "load_dataset",
    "majority_vote",
    "mcdo_uncertainty",
    "mixup_pair",
    "normalize_uncertainty",
    "preset",
    "run_cdu",
    "run_du",
    "sample_lambda",
    "save_dataset",
    "softmax_entropy",
    "split",
    "train_reference",
    "tta_uncertainty",
    "uncertainty_histograms",
    "vote_fraction",
]
