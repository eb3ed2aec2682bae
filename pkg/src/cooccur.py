"""Dining co-occurrence detection and graph construction.

Two students co-occur when they have check-ins at the same location on the same
local day no more than ``T`` seconds apart (closed inequality). Graphs are
simple and undirected and never contain isolated students.
"""

import bisect
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd

from .ingest import CheckInRecord, EventLog, StudyCalendar, WeekPartition, partition_weeks

DEFAULT_THRESHOLD = 1200

logger = logging.getLogger(__name__)


class GraphError(ValueError):
    """Raised for invalid graph construction or graph-level requests."""


@dataclass(frozen=True, order=True)
class WindowLabel:
    """A single week (``w_from == w_to``) or a cumulative week range."""

    w_from: int
    w_to: int

    @classmethod
    def week(cls, w: int) -> "WindowLabel":
        return cls(w, w)

    @property
    def is_single_week(self) -> bool:
        return self.w_from == self.w_to

    def __str__(self) -> str:
        if self.is_single_week:
            return f"W{self.w_to}"
        return f"W{self.w_from}-{self.w_to}"

    @property
    def slug(self) -> str:
        """File-name friendly form."""
        if self.is_single_week:
            return f"week_{self.w_to:02d}"
        return f"cumulative_{self.w_from:02d}_{self.w_to:02d}"

    @classmethod
    def parse(cls, text: str) -> "WindowLabel":
        body = text.strip().lstrip("Ww")
        if "-" in body:
            first, last = body.split("-", 1)
            return cls(int(first), int(last.lstrip("Ww")))
        return cls.week(int(body))


@dataclass(frozen=True)
class CoOccurrenceWitness:
    """Audit record of the earliest qualifying record pair for an edge."""

    u: str
    v: str
    location_id: str
    day: int
    t_u: int
    t_v: int

    @property
    def delta(self) -> int:
        return abs(self.t_u - self.t_v)

    def sort_key(self) -> Tuple[int, int, str]:
        return (min(self.t_u, self.t_v), max(self.t_u, self.t_v), self.location_id)


def _pair(u: str, v: str) -> Tuple[str, str]:
    return (u, v) if u < v else (v, u)


class CoOccurrenceGraph:
    """Immutable co-occurrence graph for one window."""

    def __init__(
        self,
        label: WindowLabel,
        edges: Iterable[Tuple[str, str]],
        threshold: int,
        witnesses: Optional[Dict[Tuple[str, str], CoOccurrenceWitness]] = None,
    ):
        pairs = set()
        for u, v in edges:
            if u == v:
                raise GraphError(f"Self-loop on {u!r} is not allowed")
            pairs.add(_pair(str(u), str(v)))
        # sorted insertion: float results depend only on the edge set
        graph = nx.Graph()
        graph.add_nodes_from(sorted({v for pair in pairs for v in pair}))
        graph.add_edges_from(sorted(pairs))
        self.label = label
        self.threshold = int(threshold)
        self.graph = nx.freeze(graph)
        self.witnesses = dict(witnesses or {})

    @property
    def nodes(self) -> List[str]:
        return sorted(self.graph.nodes)

    @property
    def edges(self) -> List[Tuple[str, str]]:
        return sorted(_pair(u, v) for u, v in self.graph.edges)

    @property
    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def number_of_nodes(self) -> int:
        return self.graph.number_of_nodes()

    def number_of_edges(self) -> int:
        return self.graph.number_of_edges()

    def mutable_copy(self) -> nx.Graph:
        return nx.Graph(self.graph)

    def __repr__(self) -> str:
        return (
            f"CoOccurrenceGraph({self.label}, nodes={self.number_of_nodes()}, "
            f"edges={self.number_of_edges()}, T={self.threshold})"
        )

    def write_edge_list(self, path: Union[str, Path]) -> None:
        """One ``u v`` pair per line, lexicographically sorted."""
        lines = [f"{u} {v}" for u, v in self.edges]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    def write_json(self, path: Union[str, Path]) -> None:
        description = {
            "label": str(self.label),
            "w_from": self.label.w_from,
            "w_to": self.label.w_to,
            "threshold_seconds": self.threshold,
            "node_count": self.number_of_nodes(),
            "edge_count": self.number_of_edges(),
            "nodes": self.nodes,
            "edges": [list(e) for e in self.edges],
        }
        with open(path, "w") as f:
            json.dump(description, f, indent=2)

    def write_witnesses(self, path: Union[str, Path]) -> None:
        rows = [
            {
                "u": w.u,
                "v": w.v,
                "location_id": w.location_id,
                "day": w.day,
                "t_u": w.t_u,
                "t_v": w.t_v,
                "delta_seconds": w.delta,
            }
            for _, w in sorted(self.witnesses.items())
        ]
        columns = ["u", "v", "location_id", "day", "t_u", "t_v", "delta_seconds"]
        pd.DataFrame(rows, columns=columns).to_csv(path, index=False)

    @classmethod
    def from_file(
        cls,
        path: Union[str, Path],
        label: Optional[WindowLabel] = None,
        threshold: Optional[int] = None,
    ) -> "CoOccurrenceGraph":
        """
        Load a graph from its JSON description or a ``u v`` edge list.

        An edge list carries no threshold: it comes from ``threshold``, else from
        the ``.json`` written next to it by the build stage, else the default.
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Graph file not found: {path}")
        if path.suffix.lower() == ".json":
            with open(path, "r") as f:
                data = json.load(f)
            window = WindowLabel(int(data["w_from"]), int(data["w_to"]))
            return cls(window, [tuple(e) for e in data["edges"]], data["threshold_seconds"])

        edges = []
        for line_no, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{line_no}: expected 'u v', got {line!r}")
            edges.append((parts[0], parts[1]))

        sibling = path.with_suffix(".json")
        if threshold is None and sibling.exists():
            with open(sibling, "r") as f:
                threshold = int(json.load(f)["threshold_seconds"])
        if threshold is None:
            logger.debug(f"{path} has no threshold on record; assuming {DEFAULT_THRESHOLD} s")
            threshold = DEFAULT_THRESHOLD
        return cls(label or _label_from_stem(path.stem), edges, threshold)


def _label_from_stem(stem: str) -> WindowLabel:
    """Window from a file stem written by the build stage; week 0 when unrecognised."""
    parts = stem.split("_")
    if parts[0] == "week" and len(parts) == 2 and parts[1].isdigit():
        return WindowLabel.week(int(parts[1]))
    if parts[0] == "cumulative" and len(parts) == 3 and parts[1].isdigit() and parts[2].isdigit():
        return WindowLabel(int(parts[1]), int(parts[2]))
    return WindowLabel.week(0)


def _index_by_bucket(
    events: Sequence[CheckInRecord], cal: StudyCalendar
) -> Dict[Tuple[str, int], List[int]]:
    buckets: Dict[Tuple[str, int], List[int]] = {}
    for record in events:
        buckets.setdefault((record.location_id, cal.day_of(record.timestamp)), []).append(
            record.timestamp
        )
    for times in buckets.values():
        times.sort()
    return buckets


def cooccurs(
    u_events: Sequence[CheckInRecord],
    v_events: Sequence[CheckInRecord],
    T: int,
    cal: StudyCalendar,
) -> Tuple[bool, Optional[CoOccurrenceWitness]]:
    """
    Decide whether two students co-occur.

    Returns ``(True, witness)`` with the earliest qualifying record pair, or
    ``(False, None)``.
    """
    u_ids = {r.student_id for r in u_events}
    v_ids = {r.student_id for r in v_events}
    if len(u_ids) > 1 or len(v_ids) > 1:
        raise GraphError("Each event list must belong to a single student")
    if u_ids and u_ids == v_ids:
        raise GraphError(f"Self co-occurrence is undefined ({next(iter(u_ids))!r})")
    if not u_events or not v_events:
        return False, None

    u_id, v_id = next(iter(u_ids)), next(iter(v_ids))
    v_buckets = _index_by_bucket(v_events, cal)

    best: Optional[CoOccurrenceWitness] = None
    for record in u_events:
        day = cal.day_of(record.timestamp)
        times = v_buckets.get((record.location_id, day))
        if not times:
            continue
        lo = bisect.bisect_left(times, record.timestamp - T)
        hi = bisect.bisect_right(times, record.timestamp + T)
        for t_v in times[lo:hi]:
            candidate = CoOccurrenceWitness(
                u_id, v_id, record.location_id, day, record.timestamp, t_v
            )
            if best is None or candidate.sort_key() < best.sort_key():
                best = candidate

    return best is not None, best


def _sweep_bucket(
    times: np.ndarray,
    students: np.ndarray,
    T: int,
    location_id: str,
    day: int,
    witnesses: Dict[Tuple[str, str], CoOccurrenceWitness],
) -> None:
    """Two-pointer sweep over one time-sorted (location, day) bucket."""
    ends = np.searchsorted(times, times + T, side="right")
    for i in range(len(times)):
        for j in range(i + 1, int(ends[i])):
            u, v = students[i], students[j]
            if u == v:
                continue
            key = _pair(u, v)
            t_u, t_v = (int(times[i]), int(times[j])) if u == key[0] else (int(times[j]), int(times[i]))
            candidate = CoOccurrenceWitness(key[0], key[1], location_id, day, t_u, t_v)
            current = witnesses.get(key)
            if current is None or candidate.sort_key() < current.sort_key():
                witnesses[key] = candidate


def _default_label(log: EventLog) -> WindowLabel:
    if "week" in log.frame.columns and len(log):
        weeks = log.frame["week"]
        return WindowLabel(int(weeks.min()), int(weeks.max()))
    return WindowLabel.week(0)


def build_week_graph(
    log: EventLog,
    T: int = DEFAULT_THRESHOLD,
    cal: Optional[StudyCalendar] = None,
    label: Optional[WindowLabel] = None,
) -> CoOccurrenceGraph:
    """
    Build the co-occurrence graph of one window of events.

    An empty slice yields an empty graph.
    """
    if cal is None:
        raise GraphError("A study calendar is required for day boundaries")
    if T < 0:
        raise GraphError(f"Threshold must be non-negative, got {T}")

    label = label or _default_label(log)
    witnesses: Dict[Tuple[str, str], CoOccurrenceWitness] = {}
    if len(log):
        frame = log.with_days(cal)
        for (location_id, day), part in frame.groupby(["location_id", "day"], sort=True):
            if len(part) < 2:
                continue
            part = part.sort_values(["timestamp", "student_id"], kind="mergesort")
            _sweep_bucket(
                part["timestamp"].to_numpy(dtype=np.int64),
                part["student_id"].to_numpy(dtype=object),
                int(T),
                str(location_id),
                int(day),
                witnesses,
            )

    graph = CoOccurrenceGraph(label, witnesses.keys(), T, witnesses)
    logger.debug(f"Built {graph!r}")
    return graph


def build_cumulative_graph(
    log: Union[EventLog, WeekPartition],
    w_from: int,
    w_to: int,
    T: int = DEFAULT_THRESHOLD,
    cal: Optional[StudyCalendar] = None,
) -> CoOccurrenceGraph:
    """
    Build the cumulative graph over week labels ``w_from..w_to`` inclusive.

    ``log`` is either a raw event log (partitioned with ``cal``) or an existing
    partition.
    """
    if isinstance(log, WeekPartition):
        partition = log
        cal = cal or partition.calendar
    else:
        if cal is None:
            raise GraphError("A study calendar is required to partition the log")
        partition = partition_weeks(log, cal)

    last_label = cal.label_count if cal is not None else max(partition.labels, default=0)
    if not 1 <= w_from <= w_to <= last_label:
        raise GraphError(f"Invalid cumulative range {w_from}..{w_to} (labels 1..{last_label})")

    span = partition.span(w_from, w_to)
    return build_week_graph(span, T, cal, label=WindowLabel(w_from, w_to))


def build_week_series(
    partition: WeekPartition, T: int = DEFAULT_THRESHOLD, cal: Optional[StudyCalendar] = None
) -> List[CoOccurrenceGraph]:
    """One graph per weekly slice, in label order."""
    cal = cal or partition.calendar
    return [
        build_week_graph(log, T, cal, label=WindowLabel.week(week))
        for week, log in partition.slices
    ]


def build_cumulative_series(
    partition: WeekPartition,
    anchor: int,
    T: int = DEFAULT_THRESHOLD,
    cal: Optional[StudyCalendar] = None,
    last: Optional[int] = None,
) -> List[CoOccurrenceGraph]:
    """Cumulative graphs for every W from ``anchor`` to ``last`` (default: final slice)."""
    cal = cal or partition.calendar
    last = last if last is not None else max(partition.labels, default=0)
    return [build_cumulative_graph(partition, anchor, w, T, cal) for w in range(anchor, last + 1)]


def mean_dining_count(
    log: EventLog, students: Iterable[str], n_weeks: Optional[int] = None
) -> float:
    """
    Events per student per week.

    ``n_weeks`` defaults to the number of distinct week labels in the slice
    (1 when the log has no ``week`` column).
    """
    students = set(students)
    if not students:
        raise GraphError("mean_dining_count needs at least one student")
    if n_weeks is None:
        if "week" in log.frame.columns and len(log):
            n_weeks = int(log.frame["week"].nunique())
        else:
            n_weeks = 1
    if n_weeks < 1:
        raise GraphError("n_weeks must be at least 1")
    total = int(log.frame["student_id"].isin(students).sum())
    return total / (len(students) * n_weeks)


DEFAULT_RATE_PERIODS = {"weeks 1-18": (1, 18), "weeks 19-20": (19, 20), "weeks 11-18": (11, 18)}


def dining_rate_by_period(
    partition: WeekPartition, periods: Optional[Dict[str, Tuple[int, int]]] = None
) -> pd.DataFrame:
    """Mean dining events per active student per week over named label ranges."""
    periods = periods or DEFAULT_RATE_PERIODS
    rows = []
    labels = set(partition.labels)
    for name, (first, last) in periods.items():
        weeks = [w for w in range(first, last + 1) if w in labels]
        span = partition.span(first, last)
        students = span.students
        if not weeks or not students:
            rows.append({"period": name, "weeks": len(weeks), "students": 0, "events": 0, "mean_per_week": np.nan})
            continue
        rows.append(
            {
                "period": name,
                "weeks": len(weeks),
                "students": len(students),
                "events": len(span),
                "mean_per_week": mean_dining_count(span, students, n_weeks=len(weeks)),
            }
        )
    return pd.DataFrame(rows)
