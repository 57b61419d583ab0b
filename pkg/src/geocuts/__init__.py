"""Balanced geographic clusters for geo experiments, built from user mobility."""

__version__ = "0.1.0"

from .baselines import GridPartitioner, HilbertPartitioner, grid_partition, hilbert_partition, load_external_partition
from .graph_builder import MobilityGraph, MobilityGraphBuilder, VisitRecord, Visits, build_graph, filter_users, filter_visits, normalize
from .maxflow import CutResult, FlowNetwork, min_cut
from .metrics import MetricsReport, b_metric, build_matrix, effective_cluster_count, evaluate, q_aggregates, q_metric, treatment_variance
from .partition import Partition, PartitionError, cut_size
from .partitioner import GeoCuts, PartitionConfig, geocuts_partition, greedy_merge, natural_cut, select_seeds
from .spatial import CellId, GridSpec, OutOfRegionError, discretize, hilbert_index
from .synthgen import SynthConfig, SynthData, generate

__all__ = [
    "CellId", "CutResult", "FlowNetwork", "GeoCuts", "GridPartitioner", "GridSpec", "HilbertPartitioner",
    "MetricsReport", "MobilityGraph", "MobilityGraphBuilder", "OutOfRegionError", "Partition",
    "PartitionConfig", "PartitionError", "SynthConfig", "SynthData", "VisitRecord", "Visits",
    "b_metric", "build_graph", "build_matrix", "cut_size", "discretize", "effective_cluster_count",
    "evaluate", "filter_users", "filter_visits", "generate", "geocuts_partition", "greedy_merge",
    "grid_partition", "hilbert_index", "hilbert_partition", "load_external_partition", "min_cut",
    "natural_cut", "normalize", "q_aggregates", "q_metric", "select_seeds", "treatment_variance",
]
