"""Graph classification with topology-augmented graph attention networks."""

from .graph import Graph, TopoFeatures, augment_features, build_graph, clustering_coefficients, graph_stats, node_degrees
from .models import VARIANTS, ModelSpec, build_model, count_parameters, model_forward
from .training import TrainConfig, evaluate, run_benchmark, split_dataset, train_model
from .tudataset import Dataset, GraphBatch, batch_graphs, parse_tu_dataset

__version__ = "0.1.0"
