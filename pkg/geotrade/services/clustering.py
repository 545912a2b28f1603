"""Agglomerative Ward classification of factor coordinates."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from geotrade.services.ca import ContingencyTable


logger = logging.getLogger(__name__)


class ClusteringError(ValueError):
    """Raised when a clustering request cannot be satisfied."""


@dataclass(frozen=True)
class Merge:
    node_a: int
    node_b: int
    height: float
    size: int


@dataclass(frozen=True)
class ClusterTree:
    """Merge history; leaves are 0..n-1 and the cluster formed at step s gets id n + s."""

    n_leaves: int
    merges: Tuple[Merge, ...]

    def __post_init__(self) -> None:
        if len(self.merges) != self.n_leaves - 1:
            raise ClusteringError(f"a tree over {self.n_leaves} leaves needs {self.n_leaves - 1} merges")

    @property
    def heights(self) -> np.ndarray:
        return np.array([merge.height for merge in self.merges], dtype=float)

    def linkage_matrix(self) -> np.ndarray:
        return np.array(
            [[merge.node_a, merge.node_b, merge.height, merge.size] for merge in self.merges], dtype=float
        ).reshape(-1, 4)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(step + 1, m.node_a, m.node_b, m.height, m.size) for step, m in enumerate(self.merges)],
            columns=["step", "node_a", "node_b", "height", "size"],
        )


def hca_ward(points, weights: Optional[Sequence[float]] = None) -> ClusterTree:
    """Cluster ``points`` bottom-up with the Ward criterion.

    Heights are the increase in weighted within-cluster sum of squares,
    ``w_a * w_b / (w_a + w_b) * |g_a - g_b| ** 2``, updated by Lance-Williams.
    Ties go to the lexicographically smallest pair of node ids.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 2:
        raise ClusteringError("Ward clustering needs at least two points")
    if not np.all(np.isfinite(X)):
        raise ClusteringError("point coordinates must be finite")
    n = X.shape[0]
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,) or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ClusteringError("weights must be positive, finite and one per point")

    total_nodes = 2 * n - 1
    cost = np.full((total_nodes, total_nodes), np.inf)
    sq = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=2)
    cost[:n, :n] = (w[:, None] * w[None, :]) / (w[:, None] + w[None, :]) * sq
    mass = np.zeros(total_nodes)
    mass[:n] = w
    size = np.zeros(total_nodes, dtype=int)
    size[:n] = 1

    active = list(range(n))
    merges = []
    for step in range(n - 1):
        ids = np.array(active)
        block = cost[np.ix_(ids, ids)]
        block = np.where(np.triu(np.ones_like(block, dtype=bool), k=1), block, np.inf)
        flat = int(np.argmin(block))
        a, b = int(ids[flat // ids.size]), int(ids[flat % ids.size])
        height = float(cost[a, b])
        new = n + step

        others = [node for node in active if node not in (a, b)]
        for c in others:
            w_abc = mass[a] + mass[b] + mass[c]
            updated = (
                (mass[a] + mass[c]) * cost[a, c]
                + (mass[b] + mass[c]) * cost[b, c]
                - mass[c] * height
            ) / w_abc
            cost[c, new] = cost[new, c] = updated
        mass[new] = mass[a] + mass[b]
        size[new] = size[a] + size[b]
        merges.append(Merge(node_a=a, node_b=b, height=height, size=int(size[new])))
        active = others + [new]
        active.sort()

    tree = ClusterTree(n_leaves=n, merges=tuple(merges))
    logger.debug("Ward clustering of %d points, final height %.6g", n, merges[-1].height)
    return tree


def cut_tree(tree: ClusterTree, k: int) -> np.ndarray:
    """Return ``k`` flat cluster labels, numbered by each cluster's smallest leaf index."""
    n = tree.n_leaves
    if not 1 <= k <= n:
        raise ClusteringError(f"cluster count must lie between 1 and {n}, got {k}")

    parent = list(range(2 * n - 1))

    def find(node: int) -> int:
        while parent[node] != node:
            parent[node] = parent[parent[node]]
            node = parent[node]
        return node

    for step, merge in enumerate(tree.merges[: n - k]):
        new = n + step
        parent[find(merge.node_a)] = new
        parent[find(merge.node_b)] = new

    roots = [find(leaf) for leaf in range(n)]
    canonical = {}
    labels = np.empty(n, dtype=int)
    for leaf, root in enumerate(roots):
        labels[leaf] = canonical.setdefault(root, len(canonical))
    return labels


def describe_clusters(table: ContingencyTable, labels: Sequence[int]) -> pd.DataFrame:
    """Summarise each cluster by size, summed column profile (percent) and dominant column."""
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (len(table.row_ids),):
        raise ClusteringError("need one cluster label per table row")
    rows = []
    for cluster in sorted(set(labels.tolist())):
        members = labels == cluster
        totals = table.counts[members].sum(axis=0)
        profile = 100.0 * totals / totals.sum()
        row = {
            "cluster": cluster,
            "size": int(members.sum()),
            "dominant": table.col_ids[int(np.argmax(totals))],
        }
        row.update(dict(zip(table.col_ids, profile)))
        rows.append(row)
    return pd.DataFrame(rows, columns=["cluster", "size", "dominant", *table.col_ids])
