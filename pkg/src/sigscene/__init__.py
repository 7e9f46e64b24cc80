"""Unsupervised scene discovery with Gaussian-constrained embeddings."""

from .clustering import (
    ClusterAssignment,
    CoassociationMatrix,
    EnsembleConfig,
    SceneClusterer,
    dbscan,
    ensemble_cluster,
    estimate_eps,
    sigreg_filter,
    target_outlier_rate,
)
from .embedding import (
    DistanceMatrix,
    EmbeddingSet,
    SIGRegNormalizer,
    SimilarityMatrix,
    char_fn_similarity,
    empirical_char_fn,
    gaussian_cosine_similarity,
    pairwise_similarity,
    sigreg_normalize,
    to_distance,
)
from .pipeline import RunConfig, process_dataset
from .poses import (
    CameraPose,
    SceneType,
    circular_trajectory_poses,
    generate_cluster_poses,
    infer_scene_type,
    linear_trajectory_poses,
    look_at,
    order_images,
    planar_grid_poses,
)
from .scoring import GroundTruth, ScoreReport, match_clusters, maa_for_scene, precision_for_scene, relative_pose_error, score_dataset
from .sigreg import (
    ClusterStats,
    IsotropyVerdict,
    SliceReport,
    cluster_stats,
    epps_pulley_1d,
    random_slices,
    sliced_isotropy,
    validate_cluster_gaussian,
)
from .synthgen import SynthSpec, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "CameraPose",
    "ClusterAssignment",
    "ClusterStats",
    "CoassociationMatrix",
    "DistanceMatrix",
    "EmbeddingSet",
    "EnsembleConfig",
    "GroundTruth",
    "IsotropyVerdict",
    "RunConfig",
    "SIGRegNormalizer",
    "SceneClusterer",
    "SceneType",
    "ScoreReport",
    "SimilarityMatrix",
    "SliceReport",
    "SynthSpec",
    "char_fn_similarity",
    "circular_trajectory_poses",
    "cluster_stats",
    "dbscan",
    "empirical_char_fn",
    "ensemble_cluster",
    "epps_pulley_1d",
    "estimate_eps",
    "gaussian_cosine_similarity",
    "generate_cluster_poses",
    "generate_dataset",
    "infer_scene_type",
    "linear_trajectory_poses",
    "look_at",
    "maa_for_scene",
    "match_clusters",
    "order_images",
    "pairwise_similarity",
    "planar_grid_poses",
    "precision_for_scene",
    "process_dataset",
    "random_slices",
    "relative_pose_error",
    "score_dataset",
    "sigreg_filter",
    "sigreg_normalize",
    "sliced_isotropy",
    "target_outlier_rate",
    "to_distance",
    "validate_cluster_gaussian",
]
