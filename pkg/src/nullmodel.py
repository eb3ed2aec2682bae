"""Degree-preserving null models built from double-edge swaps."""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from .cooccur import CoOccurrenceGraph, GraphError
from .metrics import average_clustering

COUNT_MODES = ("accepted", "attempts")
SIGNIFICANCE_Z = 1.96

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NullModelConfig:
    swap_rounds_multiplier: int = 10
    replicate_count: int = 100
    master_seed: int = 0
    max_attempts_per_round: int = 100
    count_mode: str = "accepted"

    def __post_init__(self):
        for name in ("swap_rounds_multiplier", "replicate_count", "max_attempts_per_round"):
            if getattr(self, name) < 1:
                raise GraphError(f"{name} must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise GraphError("master_seed must be an unsigned 64-bit integer")
        if self.count_mode not in COUNT_MODES:
            raise GraphError(f"count_mode must be one of {COUNT_MODES}")

    def replicate_rng(self, replicate_index: int) -> np.random.Generator:
        """Independent stream for one replicate, derived from (master_seed, index)."""
        return np.random.default_rng(np.random.SeedSequence([self.master_seed, replicate_index]))


@dataclass(frozen=True)
class NullReplicate:
    graph: CoOccurrenceGraph
    accepted: int
    attempts: int
    saturated: bool


@dataclass(frozen=True)
class NullEnsembleResult:
    graph_label: object
    values: Tuple[float, ...]
    mean: float
    sd: float
    accepted_swaps: int
    attempted_swaps: int
    saturated_replicates: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted_swaps / self.attempted_swaps if self.attempted_swaps else math.nan


def _sorted_edges(G: nx.Graph) -> List[Tuple[str, str]]:
    return sorted((u, v) if u < v else (v, u) for u, v in G.edges())


def double_edge_swap_round(
    G: nx.Graph,
    rng: np.random.Generator,
    edge_list: Optional[List[Tuple[str, str]]] = None,
) -> bool:
    """
    Attempt one swap of two uniformly chosen edges.

    The edges must not share an endpoint and the cross-pairing (picked at
    random between the two possibilities) must not already exist; otherwise
    ``G`` is left unchanged. ``edge_list`` is kept in step with ``G`` when
    supplied.
    """
    edges = edge_list if edge_list is not None else _sorted_edges(G)
    m = len(edges)
    if m < 2:
        raise GraphError(f"Double-edge swap needs at least 2 edges, graph has {m}")

    i = int(rng.integers(m))
    j = int(rng.integers(m - 1))
    if j >= i:
        j += 1
    (a, b), (c, d) = edges[i], edges[j]
    if len({a, b, c, d}) < 4:
        return False

    if rng.random() < 0.5:
        first, second = (a, d), (b, c)
    else:
        first, second = (a, c), (b, d)
    if G.has_edge(*first) or G.has_edge(*second):
        return False

    G.remove_edge(a, b)
    G.remove_edge(c, d)
    G.add_edge(*first)
    G.add_edge(*second)
    edges[i] = tuple(sorted(first))
    edges[j] = tuple(sorted(second))
    return True


def generate_null(
    G: CoOccurrenceGraph, config: NullModelConfig, replicate_index: int
) -> NullReplicate:
    """
    Randomise ``G`` with ``swap_rounds_multiplier * |E|`` swap rounds.

    In ``accepted`` mode only successful swaps count and rejected attempts are
    retried until the attempt budget runs out; a replicate that cannot finish is
    returned unchanged and flagged as saturated. In ``attempts`` mode every try
    counts and saturation means nothing was accepted.
    """
    m = G.number_of_edges()
    if m < 2:
        raise GraphError(f"Null model needs at least 2 edges, {G.label} has {m}")

    rng = config.replicate_rng(replicate_index)
    work = G.mutable_copy()
    edges = _sorted_edges(work)
    required = config.swap_rounds_multiplier * m
    budget = config.max_attempts_per_round * required

    accepted = attempts = 0
    if config.count_mode == "accepted":
        while accepted < required and attempts < budget:
            attempts += 1
            accepted += double_edge_swap_round(work, rng, edges)
        saturated = accepted < required
    else:
        for _ in range(required):
            attempts += 1
            accepted += double_edge_swap_round(work, rng, edges)
        saturated = accepted == 0

    if saturated:
        logger.debug(
            f"Null replicate {replicate_index} of {G.label} saturated "
            f"({accepted}/{required} swaps in {attempts} attempts)"
        )
        return NullReplicate(G, accepted, attempts, True)

    return NullReplicate(CoOccurrenceGraph(G.label, edges, G.threshold), accepted, attempts, False)


def null_clustering_baseline(
    G: CoOccurrenceGraph, config: NullModelConfig, convention: str = "zeros"
) -> NullEnsembleResult:
    """Average clustering over ``replicate_count`` independent null graphs."""
    values = []
    accepted = attempts = saturated = 0
    # reduced in replicate-index order
    for index in range(config.replicate_count):
        replicate = generate_null(G, config, index)
        values.append(average_clustering(replicate.graph, convention))
        accepted += replicate.accepted
        attempts += replicate.attempts
        saturated += replicate.saturated

    if saturated:
        logger.warning(
            f"⚠️ {saturated}/{config.replicate_count} null replicates of {G.label} saturated"
        )

    array = np.asarray(values, dtype=float)
    sd = float(array.std(ddof=1)) if len(array) > 1 else 0.0
    return NullEnsembleResult(
        graph_label=G.label,
        values=tuple(float(v) for v in array),
        mean=float(array.mean()),
        sd=sd,
        accepted_swaps=accepted,
        attempted_swaps=attempts,
        saturated_replicates=saturated,
    )


def compare_to_null(actual: float, ensemble: NullEnsembleResult) -> dict:
    """Z-score of the actual clustering against the null ensemble."""
    if ensemble.sd > 0:
        z = (actual - ensemble.mean) / ensemble.sd
    elif actual == ensemble.mean:
        z = 0.0
    else:
        z = math.copysign(math.inf, actual - ensemble.mean)
    return {"z_score": z, "significantly_larger": bool(z > SIGNIFICANCE_Z)}


def ensemble_frame(
    actual: Sequence[float], ensembles: Sequence[Optional[NullEnsembleResult]], labels: Sequence
) -> pd.DataFrame:
    """Actual vs. null clustering table (one row per window)."""
    rows = []
    for value, ensemble, label in zip(actual, ensembles, labels):
        if ensemble is None:
            rows.append(
                {"week": str(label), "actual_clustering": value, "null_mean": np.nan,
                 "null_sd": np.nan, "z_score": np.nan, "significantly_larger": False,
                 "acceptance_rate": np.nan, "saturated_replicates": 0}
            )
            continue
        comparison = compare_to_null(value, ensemble)
        rows.append(
            {
                "week": str(label),
                "actual_clustering": value,
                "null_mean": ensemble.mean,
                "null_sd": ensemble.sd,
                "z_score": comparison["z_score"],
                "significantly_larger": comparison["significantly_larger"],
                "acceptance_rate": ensemble.acceptance_rate,
                "saturated_replicates": ensemble.saturated_replicates,
            }
        )
    columns = [
        "week", "actual_clustering", "null_mean", "null_sd", "z_score",
        "significantly_larger", "acceptance_rate", "saturated_replicates",
    ]
    return pd.DataFrame(rows, columns=columns)
