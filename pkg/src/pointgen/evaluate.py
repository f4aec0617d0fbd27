"""Evaluation artifacts: dataset bits per coordinate and attention maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, QuantizedPointCloud
from .errors import InputError
from .model import BRANCHES, Model


@dataclass
class AttentionMap:
    """Distances from a query's context feature to each accessible point.

    Entries for points generated after the query (j > query_index) are
    np.inf, the inaccessible sentinel.
    """

    query_index: int  # 0-based row of the query point
    distances: np.ndarray  # length n, float64, inf past the query


def dataset_bits_per_coordinate(model: Model, dataset: Dataset) -> float:
    """Mean over clouds of per-cloud bits per coordinate."""
    if not dataset.clouds:
        raise InputError("dataset_bits_per_coordinate: empty dataset")
    vals = []
    for j, q in enumerate(dataset.clouds):
        cond = dataset.conditions[j] if dataset.conditions is not None else None
        vals.append(model.cloud_nll(q, cond).bits_per_coordinate)
    return float(np.mean(vals))


def attention_map(
    model: Model,
    q: QuantizedPointCloud,
    query_index: int,
    branch: str,
    condition=None,
) -> AttentionMap:
    """Euclidean distances between the query's shifted context feature and
    the pre-context point features of rows 0..query_index; later rows are
    infinitely far."""
    if branch not in BRANCHES:
        raise InputError(f"attention_map: unknown branch {branch!r}")
    if not 0 <= query_index < q.n:
        raise InputError(f"attention_map: query index {query_index} out of range")
    inter: dict = {}
    model.forward(q, condition, intermediates=inter)
    features = inter[branch]["features"].data
    context_row = inter[branch]["context"].data[query_index]
    distances = np.full(q.n, np.inf)
    j = query_index + 1
    distances[:j] = np.linalg.norm(features[:j] - context_row, axis=1)
    return AttentionMap(query_index=query_index, distances=distances)


def export_attention_csv(amap: AttentionMap, path) -> None:
    """CSV with header "index,distance"; the sentinel is the literal "inf"."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,distance\n")
        for j, d in enumerate(amap.distances):
            fh.write(f"{j},inf\n" if np.isinf(d) else f"{j},{d:.12g}\n")
