"""Dual-graph light graph convolution recommender with BPR training."""

from .baselines import build_variant
from .evaluate import MetricsReport, evaluate, metrics_for_user
from .graph import (
    NormalizedGraphs,
    WeightConfig,
    build_graphs,
    build_interaction_matrix,
    build_weighted_user_matrix,
    jaccard_user_matrix,
    normalize_graphs,
    quantize_weight,
)
from .model import EmbeddingTable, PropagationTrace, init_embeddings, predict_score, propagate, recommend_topk
from .preprocess import InputError, InteractionDataset, PreprocessConfig, ingest, reduce, split
from .sparse import CSRMatrix, gram, spmm, sym_normalize, transpose
from .trainer import TrainConfig, TrainHistory, train

__version__ = "0.1.0"
