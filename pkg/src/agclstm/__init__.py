"""Skeleton-based action recognition with graph-convolution LSTM layers,
per-node attention, and a temporal pooling hierarchy, on a self-contained
float64 autodiff core."""

__version__ = "0.1.0"

from .autodiff import Parameter, ShapeError, Tensor, no_grad
from .cell import (AgcLstmCellParams, AgcLstmState, AttentionParams, attention,
                   cell_step, layer_forward, temporal_avg_pool)
from .config import ConfigError, TrainConfig, config_hash, load_config, save_config
from .data import (SkeletonSequence, SyntheticActionSpec, generate_synthetic,
                   parse_ntu_skeleton, sample_fixed_length)
from .graph import (AdjacencyStack, PartMap, SkeletonGraph, build_adjacency_stack,
                    build_part_graph, label_partition, neighbor_sets)
from .graphconv import GraphConvWeights, graph_conv
from .model import (AgcLstmNetwork, FeatureAugmenter, LossWeights,
                    baseline_variants, build_network, build_part_stream,
                    hybrid_predict, loss, predict)
from .optim import Adam, AdamState, finite_difference_check

__all__ = [
    "Adam", "AdamState", "AdjacencyStack", "AgcLstmCellParams", "AgcLstmNetwork",
    "AgcLstmState", "AttentionParams", "ConfigError", "FeatureAugmenter",
    "GraphConvWeights", "LossWeights", "Parameter", "PartMap", "ShapeError",
    "SkeletonGraph", "SkeletonSequence", "SyntheticActionSpec", "Tensor",
    "TrainConfig", "attention", "baseline_variants", "build_adjacency_stack",
    "build_network", "build_part_graph", "build_part_stream", "cell_step",
    "config_hash", "finite_difference_check", "generate_synthetic", "graph_conv",
    "hybrid_predict", "label_partition", "layer_forward", "load_config", "loss",
    "neighbor_sets", "no_grad", "parse_ntu_skeleton", "predict",
    "sample_fixed_length", "save_config", "temporal_avg_pool",
]
