"""Clustering coefficients, centralities and topology summaries."""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Sequence

import networkx as nx
import numpy as np
import pandas as pd

from .cooccur import CoOccurrenceGraph, GraphError, WindowLabel

KINDS = ("degree", "closeness", "betweenness")
KIND_ALIASES = {
    "dc": "degree",
    "cc": "closeness",
    "bc": "betweenness",
    "degree": "degree",
    "closeness": "closeness",
    "betweenness": "betweenness",
}
SHORT_NAMES = {"degree": "DC", "closeness": "CC", "betweenness": "BC"}
CLUSTERING_CONVENTIONS = ("zeros", "exclude")

logger = logging.getLogger(__name__)


def resolve_kind(kind: str) -> str:
    """Normalise ``dc``/``cc``/``bc`` (any case) to the full centrality name."""
    try:
        return KIND_ALIASES[kind.strip().lower()]
    except KeyError:
        raise GraphError(f"Unknown centrality kind {kind!r}; expected one of {sorted(KIND_ALIASES)}")


@dataclass(frozen=True)
class CentralityVector:
    """Per-node scores for one centrality kind on one graph."""

    kind: str
    graph_label: WindowLabel
    scores: Dict[str, float]

    def as_series(self) -> pd.Series:
        return pd.Series(self.scores, name=SHORT_NAMES[self.kind].lower(), dtype=float).sort_index()

    def reindexed(self, roster: Iterable[str], fill: float = 0.0) -> pd.Series:
        """Scores over ``roster``; students missing from the graph get ``fill``."""
        return self.as_series().reindex(list(roster), fill_value=fill)


@dataclass(frozen=True)
class TopologySummary:
    graph_label: WindowLabel
    node_count: int
    edge_count: int
    average_degree: float
    average_clustering: float  # NaN marks an empty graph


def _require_nonempty(G: CoOccurrenceGraph) -> None:
    if G.number_of_nodes() == 0:
        raise GraphError(f"Graph {G.label} is empty")


def local_clustering(G: CoOccurrenceGraph, v: str) -> float:
    """Fraction of connected neighbour pairs of ``v``; 0 when degree < 2."""
    if v not in G.graph:
        raise GraphError(f"Node {v!r} is not in graph {G.label}")
    return float(nx.clustering(G.graph, v))


def average_clustering(G: CoOccurrenceGraph, convention: str = "zeros") -> float:
    """
    Unweighted mean of local clustering.

    ``zeros`` keeps degree<2 nodes as 0; ``exclude`` leaves them out (NaN when no
    node has degree >= 2).
    """
    _require_nonempty(G)
    if convention not in CLUSTERING_CONVENTIONS:
        raise GraphError(f"Unknown clustering convention {convention!r}")
    if convention == "zeros":
        return float(nx.average_clustering(G.graph, count_zeros=True))
    eligible = [v for v, d in G.graph.degree() if d >= 2]
    if not eligible:
        return math.nan
    values = nx.clustering(G.graph, eligible)
    return float(np.mean([values[v] for v in eligible]))


def degree_centrality(G: CoOccurrenceGraph) -> CentralityVector:
    _require_nonempty(G)
    n = G.number_of_nodes()
    if n == 1:
        scores = {v: 0.0 for v in G.graph}
    else:
        scores = {v: d / (n - 1) for v, d in G.graph.degree()}
    return CentralityVector("degree", G.label, scores)


def closeness_centrality(G: CoOccurrenceGraph) -> CentralityVector:
    """Component-scaled closeness, valid on disconnected graphs."""
    _require_nonempty(G)
    scores = nx.closeness_centrality(G.graph, wf_improved=True)
    return CentralityVector("closeness", G.label, {v: float(s) for v, s in scores.items()})


def betweenness_centrality(G: CoOccurrenceGraph) -> CentralityVector:
    """Pair-normalised shortest-path betweenness (Brandes accumulation)."""
    _require_nonempty(G)
    if G.number_of_nodes() < 3:
        return CentralityVector("betweenness", G.label, {v: 0.0 for v in G.graph})
    scores = nx.betweenness_centrality(G.graph, normalized=True, endpoints=False)
    return CentralityVector("betweenness", G.label, {v: float(s) for v, s in scores.items()})


CENTRALITY_FUNCTIONS = {
    "degree": degree_centrality,
    "closeness": closeness_centrality,
    "betweenness": betweenness_centrality,
}


def centrality(G: CoOccurrenceGraph, kind: str) -> CentralityVector:
    return CENTRALITY_FUNCTIONS[resolve_kind(kind)](G)


def summarize(G: CoOccurrenceGraph, convention: str = "zeros") -> TopologySummary:
    n, m = G.number_of_nodes(), G.number_of_edges()
    if n == 0:
        return TopologySummary(G.label, 0, 0, 0.0, math.nan)
    return TopologySummary(G.label, n, m, 2.0 * m / n, average_clustering(G, convention))


def topology_series(
    graphs: Sequence[CoOccurrenceGraph], convention: str = "zeros"
) -> List[TopologySummary]:
    """One summary per graph, in input order."""
    return [summarize(G, convention) for G in graphs]


def topology_frame(summaries: Sequence[TopologySummary]) -> pd.DataFrame:
    """Tabular form of a topology series (``week`` column holds the window label)."""
    rows = []
    for summary in summaries:
        row = asdict(summary)
        label = row.pop("graph_label")
        row = {"week": str(WindowLabel(**label)), **row}
        rows.append(row)
    columns = ["week", "node_count", "edge_count", "average_degree", "average_clustering"]
    return pd.DataFrame(rows, columns=columns)


def average_degree_by_period(
    summaries: Sequence[TopologySummary], split_week: int = 10
) -> Dict[str, float]:
    """Mean weekly average degree up to and after ``split_week``."""
    early = [s.average_degree for s in summaries if s.graph_label.w_to <= split_week]
    late = [s.average_degree for s in summaries if s.graph_label.w_to > split_week]
    return {
        "before": float(np.mean(early)) if early else math.nan,
        "after": float(np.mean(late)) if late else math.nan,
    }


def node_table(G: CoOccurrenceGraph, measures: Sequence[str]) -> pd.DataFrame:
    """Per-node table of the requested measures (``dc, cc, bc, clustering``)."""
    _require_nonempty(G)
    table = pd.DataFrame(index=pd.Index(G.nodes, name="node_id"))
    for measure in measures:
        name = measure.strip().lower()
        if name == "clustering":
            values = nx.clustering(G.graph)
            table["clustering"] = pd.Series(values, dtype=float)
        else:
            vector = centrality(G, name)
            table[SHORT_NAMES[vector.kind].lower()] = vector.as_series()
    return table
