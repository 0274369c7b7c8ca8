from typing import Dict, List, Optional

from .json_model import BaseModel


class GraphStatsModel(BaseModel):
    nodes: int
    # Directed count, 2|E|
    edges: int
    # Percent of the N^2 adjacency entries that are non-zero
    sparsity: float
    homophily: Optional[float]


class Thresholds(BaseModel):
    """Selected (eps1, eps2) with the search trace of [eps1, eps2, correct count] rows"""
    eps1: float
    eps2: float
    trace: List[list]


class CondensedInfoModel(BaseModel):
    method: str
    ratio: float
    num_nodes: int
    num_classes: int
    # Subtracted from graph features before scoring; empty when they were not centered
    feature_offset: List[float]


class RunRowModel(BaseModel):
    dataset: str
    ratio: float
    noise_level: float
    method: str
    seed: int
    accuracy: Optional[float]
    homophily_before: Optional[float]
    homophily_after: Optional[float]
    # Directed counts, 2|E|, like GraphStatsModel.edges
    edges_before: Optional[int]
    edges_after_delete: Optional[int]
    edges_after_add: Optional[int]
    t_correlation_s: Optional[float]
    t_delete_s: Optional[float]
    t_add_s: Optional[float]
    t_search_s: Optional[float]
    train_homophily_before: Optional[float]
    train_homophily_after: Optional[float]
    t_denoise_s: Optional[float]
    t_condense_s: Optional[float]
    status: str
    # Sweep cell, as "key/path=value,..."; empty outside multi-cell sweeps
    cell: Optional[str]


class AggregateRowModel(BaseModel):
    dataset: str
    ratio: float
    noise_level: float
    method: str
    runs: int
    accuracy_mean: Optional[float]
    accuracy_std: Optional[float]
    cell: Optional[str]


class RunReport(BaseModel):
    rows: List[RunRowModel]
    aggregates: List[AggregateRowModel]
    metadata: Dict[str, str]
