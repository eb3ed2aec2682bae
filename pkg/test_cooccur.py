#!/usr/bin/env python3
"""
Tests for co-occurrence detection and weekly / cumulative graph construction.

The graph builder is checked against a brute-force oracle that compares every
pair of records directly.
"""

import calendar
import itertools
import math
from datetime import date

import numpy as np
import pandas as pd
import pytest

from src.cooccur import (
    CoOccurrenceGraph,
    GraphError,
    WindowLabel,
    build_cumulative_graph,
    build_cumulative_series,
    build_week_graph,
    build_week_series,
    cooccurs,
    dining_rate_by_period,
    mean_dining_count,
)
from src.ingest import DAY_SECONDS, CheckInRecord, EventLog, StudyCalendar, partition_weeks

T = 1200
WEEK = 7 * DAY_SECONDS
START = calendar.timegm(date(2013, 1, 6).timetuple())
CAL = StudyCalendar.from_values("2013-01-06", 21, [11], 0)


def make_log(rows) -> EventLog:
    return EventLog.from_records(CheckInRecord(s, t, loc) for s, t, loc in rows)


def oracle_edges(log: EventLog, threshold: int, cal: StudyCalendar) -> set:
    """All record pairs, checked one by one."""
    edges = set()
    for a, b in itertools.combinations(log.records(), 2):
        if a.student_id == b.student_id or a.location_id != b.location_id:
            continue
        if cal.day_of(a.timestamp) != cal.day_of(b.timestamp):
            continue
        if abs(a.timestamp - b.timestamp) <= threshold:
            edges.add(tuple(sorted((a.student_id, b.student_id))))
    return edges


def random_log(rng: np.random.Generator) -> EventLog:
    """Up to 200 records, dense enough in time to produce many near-threshold pairs."""
    n_records = int(rng.integers(0, 201))
    n_students = int(rng.integers(2, 16))
    n_locations = int(rng.integers(1, 4))
    span = int(rng.integers(1, 4)) * DAY_SECONDS
    rows = [
        (
            f"s{int(rng.integers(n_students)):02d}",
            START + int(rng.integers(0, span)),
            f"loc{int(rng.integers(n_locations))}",
        )
        for _ in range(n_records)
    ]
    return make_log(rows)


def test_week_graph_matches_brute_force_oracle():
    """200 random logs, zero edge discrepancies."""
    rng = np.random.default_rng(1200)
    for _ in range(200):
        log = random_log(rng)
        graph = build_week_graph(log, T, CAL)
        assert graph.edge_set == oracle_edges(log, T, CAL)


@pytest.mark.parametrize("delta,expected", [(0, True), (T - 1, True), (T, True), (T + 1, False)])
def test_threshold_boundary_is_inclusive(delta, expected):
    log = make_log([("a", START + 3600, "hall"), ("b", START + 3600 + delta, "hall")])
    graph = build_week_graph(log, T, CAL)
    assert (("a", "b") in graph.edge_set) is expected


def test_pairs_across_midnight_never_connect():
    midnight = START + DAY_SECONDS
    log = make_log([("a", midnight - 5, "hall"), ("b", midnight + 5, "hall")])
    assert build_week_graph(log, T, CAL).number_of_edges() == 0


def test_pairs_across_locations_never_connect():
    log = make_log([("a", START + 3600, "hall"), ("b", START + 3600, "cafe")])
    assert build_week_graph(log, T, CAL).number_of_edges() == 0


def test_day_boundary_follows_timezone_offset():
    """The same UTC instants fall on one local day under a -5h offset."""
    utc_midnight = START + DAY_SECONDS
    log = make_log([("a", utc_midnight - 5, "hall"), ("b", utc_midnight + 5, "hall")])
    local = StudyCalendar.from_values("2013-01-05", 21, [], -5 * 3600)
    assert build_week_graph(log, T, local).edge_set == {("a", "b")}


def test_isolated_students_are_not_nodes():
    log = make_log(
        [("a", START + 100, "hall"), ("b", START + 200, "hall"), ("loner", START + 50_000, "hall")]
    )
    graph = build_week_graph(log, T, CAL)
    assert graph.nodes == ["a", "b"]


def test_empty_slice_gives_empty_graph():
    graph = build_week_graph(EventLog(), T, CAL, label=WindowLabel.week(3))
    assert graph.number_of_nodes() == 0
    assert graph.number_of_edges() == 0
    assert str(graph.label) == "W3"


def test_calendar_is_required():
    with pytest.raises(GraphError):
        build_week_graph(EventLog(), T, None)


def test_witness_is_earliest_qualifying_pair():
    u = [CheckInRecord("a", START + 5000, "hall"), CheckInRecord("a", START + 1000, "hall")]
    v = [CheckInRecord("b", START + 5100, "hall"), CheckInRecord("b", START + 1500, "hall")]
    found, witness = cooccurs(u, v, T, CAL)

    assert found
    assert (witness.t_u, witness.t_v) == (START + 1000, START + 1500)
    assert witness.delta == 500
    assert witness.day == 0


def test_cooccurs_agrees_with_graph_builder():
    rng = np.random.default_rng(7)
    for _ in range(30):
        log = random_log(rng)
        graph = build_week_graph(log, T, CAL)
        by_student = log.by_student()
        for u, v in itertools.combinations(sorted(by_student), 2):
            found, witness = cooccurs(by_student[u], by_student[v], T, CAL)
            assert found == ((u, v) in graph.edge_set)
            if found:
                assert witness == graph.witnesses[(u, v)]


def test_cooccurs_rejects_same_student():
    events = [CheckInRecord("a", START, "hall")]
    with pytest.raises(GraphError):
        cooccurs(events, events, T, CAL)


def test_cooccurs_no_events_is_false():
    assert cooccurs([], [CheckInRecord("b", START, "hall")], T, CAL) == (False, None)


def test_cooccurs_is_symmetric():
    rng = np.random.default_rng(31)
    for _ in range(20):
        by_student = random_log(rng).by_student()
        for u, v in itertools.combinations(sorted(by_student), 2):
            forward, _ = cooccurs(by_student[u], by_student[v], T, CAL)
            backward, _ = cooccurs(by_student[v], by_student[u], T, CAL)
            assert forward == backward


def test_edges_grow_with_threshold():
    """Edges under a smaller threshold are a subset of those under a larger one."""
    rng = np.random.default_rng(32)
    thresholds = [0, 60, 600, T, 3600]
    for _ in range(30):
        log = random_log(rng)
        edge_sets = [build_week_graph(log, t, CAL).edge_set for t in thresholds]
        for smaller, larger in zip(edge_sets, edge_sets[1:]):
            assert smaller <= larger


def test_self_loops_are_rejected():
    with pytest.raises(GraphError):
        CoOccurrenceGraph(WindowLabel.week(1), [("a", "a")], T)


def weekly_log() -> EventLog:
    """One co-dining pair per label week 1..20 (raw week 11 skipped)."""
    rows = []
    label = 0
    for raw in range(1, 22):
        if raw == 11:
            rows.append(("x", START + 10 * WEEK + 60, "hall"))
            rows.append(("y", START + 10 * WEEK + 90, "hall"))
            continue
        label += 1
        base = START + (raw - 1) * WEEK + 12 * 3600
        rows.append((f"s{label:02d}", base, "hall"))
        rows.append((f"s{label + 1:02d}", base + 60, "hall"))
    return make_log(rows)


def test_cumulative_graph_is_union_of_weekly_graphs():
    partition = partition_weeks(weekly_log(), CAL)
    weekly = build_week_series(partition, T, CAL)
    cumulative = build_cumulative_graph(partition, 11, 20, T, CAL)

    union = set().union(*(g.edge_set for g in weekly[10:20]))
    assert cumulative.edge_set == union
    assert cumulative.label == WindowLabel(11, 20)
    assert ("x", "y") not in cumulative.edge_set


def test_cumulative_graph_from_raw_log_matches_partition():
    log = weekly_log()
    from_log = build_cumulative_graph(log, 11, 13, T, CAL)
    from_partition = build_cumulative_graph(partition_weeks(log, CAL), 11, 13, T, CAL)
    assert from_log.edge_set == from_partition.edge_set == {
        ("s11", "s12"), ("s12", "s13"), ("s13", "s14")
    }


@pytest.mark.parametrize("w_from,w_to", [(0, 5), (12, 11), (11, 21)])
def test_cumulative_range_is_validated(w_from, w_to):
    with pytest.raises(GraphError):
        build_cumulative_graph(weekly_log(), w_from, w_to, T, CAL)


def test_cumulative_series_grows_monotonically():
    partition = partition_weeks(weekly_log(), CAL)
    series = build_cumulative_series(partition, 11, T, CAL)

    assert [g.label.w_to for g in series] == list(range(11, 21))
    for earlier, later in zip(series, series[1:]):
        assert earlier.edge_set <= later.edge_set


def test_graph_files_round_trip(tmp_path):
    graph = build_week_graph(weekly_log(), T, CAL, label=WindowLabel(11, 20))
    graph.write_json(tmp_path / "g.json")
    graph.write_edge_list(tmp_path / "g.edges")

    from_json = CoOccurrenceGraph.from_file(tmp_path / "g.json")
    from_edges = CoOccurrenceGraph.from_file(tmp_path / "g.edges", label=WindowLabel(11, 20))
    assert from_json.label == graph.label
    assert from_json.edge_set == graph.edge_set == from_edges.edge_set
    assert (tmp_path / "g.edges").read_text().splitlines()[0] == "s01 s02"


def test_edge_list_keeps_threshold_of_its_json(tmp_path):
    graph = build_week_graph(weekly_log(), 600, CAL, label=WindowLabel.week(12))
    graph.write_edge_list(tmp_path / "week_12.edges")
    assert CoOccurrenceGraph.from_file(tmp_path / "week_12.edges").threshold == T

    graph.write_json(tmp_path / "week_12.json")
    loaded = CoOccurrenceGraph.from_file(tmp_path / "week_12.edges")
    assert loaded.threshold == 600
    assert loaded.label == WindowLabel.week(12)
    assert CoOccurrenceGraph.from_file(tmp_path / "week_12.edges", threshold=900).threshold == 900


def test_window_label_text_forms():
    assert str(WindowLabel(11, 15)) == "W11-15"
    assert WindowLabel(11, 15).slug == "cumulative_11_15"
    assert WindowLabel.week(3).slug == "week_03"
    assert WindowLabel.parse("W11-15") == WindowLabel(11, 15)
    assert WindowLabel.parse("W7") == WindowLabel.week(7)


def test_mean_dining_count():
    log = make_log([("a", START + i, "hall") for i in range(6)] + [("b", START + 100, "hall")])
    assert mean_dining_count(log, {"a", "b"}, n_weeks=1) == pytest.approx(3.5)
    assert mean_dining_count(log, {"a", "b", "c"}, n_weeks=2) == pytest.approx(7 / 6)
    with pytest.raises(GraphError):
        mean_dining_count(log, set())


def test_dining_rate_by_period():
    rows = []
    for raw in (1, 2, 12):
        for i in range(4):
            rows.append(("a", START + (raw - 1) * WEEK + 3600 * (i + 1), "hall"))
        rows.append(("b", START + (raw - 1) * WEEK + 100, "hall"))
    partition = partition_weeks(make_log(rows), CAL)
    rates = dining_rate_by_period(partition, {"early": (1, 2), "later": (11, 11), "none": (15, 18)})
    rates = rates.set_index("period")

    assert rates.loc["early", "weeks"] == 2
    assert rates.loc["early", "mean_per_week"] == pytest.approx(10 / (2 * 2))
    assert rates.loc["later", "mean_per_week"] == pytest.approx(5 / 2)
    assert math.isnan(rates.loc["none", "mean_per_week"])
