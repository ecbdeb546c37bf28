"""Semi-supervised domain adaptation with class-adaptability source example
weighting, on synthetic vector benchmarks.

A pure-numpy implementation: a small MLP feature extractor and linear
classifier trained with self-training consistency, an adversarial entropy
objective on unlabeled targets, and similarity-based per-source-sample loss
weights driven by how well each class predicts the few labeled targets.
"""

from .augment import AugmentPolicy, AugmentedLabeledTargets, build_lt_a, strong, weak
from .bank import FeatureBank, class_similarities, momentum_update, new_bank, refresh_full
from .data import DatasetBundle, GeneratorConfig, generate, load_csv, save_csv
from .evaluate import EvalReport, evaluate, export_embeddings
from .losses import LossBreakdown, LossSpec
from .model import (
    Gradients,
    ModelParams,
    OptimizerState,
    TrainBatch,
    backward,
    features,
    init_params,
    load_checkpoint,
    logits,
    predict_probs,
    save_checkpoint,
    sgd_step,
)
from .numerics import SeededRng, cosine_similarity, cross_entropy, entropy, finite_diff_gradient, softmax
from .trainer import ConvergenceDetector, RunConfig, RunResult, TrainingDiverged, run, step
from .weighting import (
    AccuracyVector,
    WeightTable,
    class_accuracy,
    class_weight_bounds,
    clamp_far_only,
    clamp_near_only,
    compute_weights,
    fixed_weights,
)

__version__ = "0.1.0"
