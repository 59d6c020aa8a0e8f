"""Listwise learning-to-rank with soft ranks and gradient-boosted trees."""
from .data import QueryDataset, dataset_stats, parse_letor, write_letor
from .gbm import LearningCurve, TrainConfig, TreeEnsemble, load_model, predict, save_model, train
from .loss import LossSpec, LossVariant, compute_residuals, precompute_target_ranks, softrank_mse_loss
from .metrics import EvalReport, evaluate, map_at_k, ndcg_at_k
from .softrank import SoftRankResult, isotonic_pav, permutahedron_project, soft_rank, soft_rank_vjp

__all__ = [
    "EvalReport",
    "LearningCurve",
    "LossSpec",
    "LossVariant",
    "QueryDataset",
    "SoftRankResult",
    "TrainConfig",
    "TreeEnsemble",
    "compute_residuals",
    "dataset_stats",
    "evaluate",
    "isotonic_pav",
    "load_model",
    "map_at_k",
    "ndcg_at_k",
    "parse_letor",
    "permutahedron_project",
    "precompute_target_ranks",
    "predict",
    "save_model",
    "soft_rank",
    "soft_rank_vjp",
    "softrank_mse_loss",
    "train",
    "write_letor",
]
