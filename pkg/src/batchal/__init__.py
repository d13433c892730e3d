"""Pool-based batch active learning on top of gradient embeddings.

The package bundles the batch selection strategies (k-means++ seeding on
hallucinated-gradient embeddings, a k-DPP swap chain, farthest-first
traversal, uncertainty scores, a two-arm bandit, uniform sampling), a small
numpy MLP backend so experiments run end to end, and the statistical
machinery used to compare selectors across experiment grids.
"""

__version__ = "0.1.0"

from .embeddings import (
    GradientEmbedding,
    PredictionRecord,
    gradient_embedding,
    grad_norm_sq_for_label,
    hypothetical_label,
    hypothetical_labels,
    pool_gradient_embeddings,
)
from .samplers import (
    SelectionRequest,
    SelectionResult,
    SelectorKind,
    ffkc_select,
    kdpp_mcmc_sample,
    kmeanspp_seed,
    random_select,
    uncertainty_scores,
    uncertainty_select,
)
from .mlp import MlpConfig, MlpParams, TrainResult, forward, loss_and_grad, predict_pool, test_accuracy, train_from_scratch
from .diagnostics import BatchDiagnostics, compute_batch_diagnostics, log_gram_det, mean_embedding_norm
from .stats import (
    PenaltyMatrix,
    SettingKey,
    beats,
    budget_schedule,
    compute_n0,
    critical_value,
    normalized_error_cdf,
    penalty_matrix,
    t_score,
)
from .datasets import Dataset, load_csv, load_libsvm, synth_gaussian_mixture
from .loop import AlblState, ExperimentConfig, RoundLog, run_experiment
from .results_io import ResultsWriter, read_results, write_manifest, write_results
