"""Core-periphery layout and scatter data for cumulative networks."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats as sp_stats

from .cooccur import CoOccurrenceGraph, GraphError
from .metrics import CentralityVector
from .stats import RegularizedSeries, StatsError, TraitScores, rank_with_ties, spearman_pvalue, spearman_rho, star_tier

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayoutResult:
    """Node placement table plus the edge list it was computed for."""

    nodes: pd.DataFrame
    edges: List[Tuple[str, str]]

    def write(self, node_path: Union[str, Path], edge_path: Union[str, Path]) -> None:
        self.nodes.to_csv(node_path, index=False, float_format="%.12g")
        pd.DataFrame(self.edges, columns=["u", "v"]).to_csv(edge_path, index=False)


@dataclass(frozen=True)
class ScatterSeries:
    points: pd.DataFrame
    rho: float
    p_value: float
    stars: str

    def write(self, path: Union[str, Path]) -> None:
        self.points.to_csv(path, index=False, float_format="%.17g")


def trait_ranks(scores: TraitScores, nodes: List[str], field: str = "dF") -> pd.Series:
    """Relative ranks of a trait over the graph nodes that have scores."""
    values = scores.field(field).reindex(nodes).dropna()
    if values.empty:
        return pd.Series(dtype=float)
    return pd.Series(rank_with_ties(values.to_numpy()), index=values.index)


def core_periphery_layout(
    G: CoOccurrenceGraph,
    centrality: CentralityVector,
    dF_ranks: Optional[Mapping[str, float]] = None,
) -> LayoutResult:
    """
    Place nodes on concentric rings, higher centrality nearer the centre.

    Ring radius is the node's tie-inclusive rank divided by n, so tied nodes
    share a ring and the least central nodes sit at radius 1. Angles advance by
    the golden angle in (descending centrality, ascending id) order.
    """
    if G.number_of_nodes() == 0:
        raise GraphError(f"Cannot lay out empty graph {G.label}")
    if set(centrality.scores) != set(G.nodes):
        raise GraphError("Centrality domain does not match the graph's node set")

    dF_ranks = dF_ranks if dF_ranks is not None else {}
    order = sorted(G.nodes, key=lambda v: (-centrality.scores[v], v))
    values = np.array([centrality.scores[v] for v in order], dtype=float)
    n = len(order)
    rings = sp_stats.rankdata(-values, method="max")

    rows = []
    for position, (node, ring) in enumerate(zip(order, rings)):
        radius = float(ring) / n
        angle = math.fmod(position * GOLDEN_ANGLE, 2.0 * math.pi)
        rows.append(
            {
                "node_id": node,
                "radius": radius,
                "angle": angle,
                "x": radius * math.cos(angle),
                "y": radius * math.sin(angle),
                "color_value": centrality.scores[node],
                "size_value": float(dF_ranks.get(node, math.nan)),
            }
        )
    return LayoutResult(pd.DataFrame(rows), G.edges)


def scatter_series(
    reg_centrality: RegularizedSeries, reg_dF: RegularizedSeries, method: str = "auto"
) -> ScatterSeries:
    """Paired (regularized centrality, regularized dF) points with a Spearman annotation."""
    x, y = reg_centrality.values, reg_dF.values
    if set(x.index) != set(y.index):
        raise StatsError("Regularized series cover different students")
    ids = sorted(x.index)
    x, y = x.reindex(ids), y.reindex(ids)
    rho = spearman_rho(x.to_numpy(), y.to_numpy())
    p_value = spearman_pvalue(rho, len(ids), method, x=x.to_numpy(), y=y.to_numpy())
    points = pd.DataFrame({"student_id": ids, "x": x.to_numpy(), "y": y.to_numpy()})
    return ScatterSeries(points, rho, p_value, star_tier(p_value))
