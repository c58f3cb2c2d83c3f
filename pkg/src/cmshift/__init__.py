"""Contrastive mean-shift learning for generalized category discovery."""

from .clustering import (
    ClusteringResult,
    MergeHistory,
    MergeRecord,
    cut,
    load_clustering,
    save_clustering,
    semi_supervised_kmeans,
    ward_cluster,
)
from .data import (
    DatasetManifest,
    EmbeddingBank,
    ManifestItem,
    ManifestView,
    SyntheticConfig,
    generate_synthetic,
    load_embedding_bank,
    load_manifest,
    save_embedding_bank,
    save_manifest,
)
from .encoder import (
    HeadConfig,
    OptimizerConfig,
    ProjectionHead,
    backward,
    forward,
    init_head,
    load_head,
    make_views,
    save_head,
    sgd_step,
)
from .evaluation import (
    AccuracyReport,
    CostMatrix,
    build_cost_matrix,
    gcd_accuracy,
    hungarian,
    labeled_subset_accuracy,
)
from .losses import ContrastiveBatch, LossConfig, cms_loss, sup_con_loss, total_loss
from .meanshift import KernelConfig, NeighborSet, kernel_weights, knn_search, shift_all, shift_one
from .trainer import (
    EpochState,
    FitResult,
    InferenceConfig,
    InferenceOutcome,
    TrainConfig,
    TrainingLog,
    estimate_k,
    final_inference,
    fit,
    refresh_bank,
    train_epoch,
)

__version__ = "0.1.0"
