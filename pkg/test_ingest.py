#!/usr/bin/env python3
"""
Tests for check-in parsing, study calendar arithmetic and weekly partitioning.
"""

import calendar
import io
from datetime import date
from pathlib import Path

import pytest

from src.ingest import (
    DAY_SECONDS,
    CheckInRecord,
    EventLog,
    IngestError,
    StudyCalendar,
    build_manifest,
    day_of,
    parse_checkins,
    partition_weeks,
    student_week_counts,
)

WEEK = 7 * DAY_SECONDS
START = calendar.timegm(date(2013, 1, 6).timetuple())


def make_calendar(excluded=(11,), tz_offset=0, n_weeks=21) -> StudyCalendar:
    return StudyCalendar.from_values("2013-01-06", n_weeks, excluded, tz_offset)


def write_student_files(directory: Path, logs: dict) -> Path:
    """Write one ``<student>.csv`` per entry; values are lists of text lines."""
    directory.mkdir(parents=True, exist_ok=True)
    for student, lines in logs.items():
        (directory / f"{student}.csv").write_text("\n".join(lines) + "\n")
    return directory


@pytest.fixture
def dining_dir(tmp_path):
    """Two per-student files, one with a header row."""
    return write_student_files(
        tmp_path / "dining",
        {
            "s01": ["timestamp,location", f"{START + 3600},hall", f"{START + 7200},cafe"],
            "s02": [f"{START + 3700},hall"],
        },
    )


def test_parse_per_student_directory(dining_dir):
    """Student ids come from file stems and records are time-sorted."""
    log = parse_checkins(dining_dir, "per-student", make_calendar())

    assert len(log) == 3
    assert log.students == ["s01", "s02"]
    assert log.rejected_count == 0
    assert list(log.frame["timestamp"]) == [START + 3600, START + 3700, START + 7200]
    assert log.records()[1] == CheckInRecord("s02", START + 3700, "hall")


def test_malformed_lines_are_rejected_with_line_numbers(tmp_path):
    """Bad lines are skipped and reported; good lines survive."""
    directory = write_student_files(
        tmp_path / "dining",
        {"s01": [f"{START + 10},hall", "abc,hall", f"{START + 20}", f"{START + 30},  ", f"{START + 40},cafe"]},
    )
    log = parse_checkins(directory, "per-student", make_calendar())

    assert len(log) == 2
    reasons = {r.line: r.reason for r in log.rejections}
    assert reasons[2].startswith("non-numeric timestamp")
    assert reasons[3] == "too few fields"
    assert reasons[4] == "empty identifier"
    assert log.input_lines == 5


def test_fractional_timestamps_are_truncated(tmp_path):
    directory = write_student_files(tmp_path / "dining", {"s01": [f"{START + 10}.9,hall"]})
    log = parse_checkins(directory, "per-student", make_calendar())
    assert list(log.frame["timestamp"]) == [START + 10]


def test_duplicate_lines_kept_once(tmp_path):
    """Identical (student, timestamp, location) triples count once."""
    directory = write_student_files(
        tmp_path / "dining", {"s01": [f"{START + 10},hall", f"{START + 10},hall", f"{START + 10},cafe"]}
    )
    log = parse_checkins(directory, "per-student", make_calendar())

    assert len(log) == 2
    assert [r.reason for r in log.rejections] == ["duplicate record"]
    assert log.input_lines == len(log) + log.rejected_count


@pytest.mark.parametrize("raw", ["inf", "-inf", "1e400", "99999999999999999999"])
def test_unrepresentable_timestamps_are_rejected(tmp_path, raw):
    directory = write_student_files(
        tmp_path / "dining", {"s01": [f"{START + 10},hall", f"{raw},hall", f"{START + 20},hall"]}
    )
    log = parse_checkins(directory, "per-student", make_calendar())

    assert list(log.frame["timestamp"]) == [START + 10, START + 20]
    assert [r.line for r in log.rejections] == [2]
    assert log.rejections[0].reason.startswith(("timestamp out of range", "non-numeric timestamp"))
    assert log.input_lines == len(log) + log.rejected_count


def test_blank_lines_do_not_shift_line_numbers(tmp_path):
    path = tmp_path / "dining" / "s01.csv"
    path.parent.mkdir()
    path.write_text(f"timestamp,location\n\n{START + 10},hall\n   \nabc,hall\n")
    log = parse_checkins(path, "per-student", make_calendar())

    assert len(log) == 1
    assert [(r.line, r.reason.split(" '")[0]) for r in log.rejections] == [(5, "non-numeric timestamp")]
    assert log.input_lines == 2


def test_same_stem_in_two_directories_counts_duplicates(tmp_path):
    first = write_student_files(tmp_path / "a", {"s01": [f"{START + 10},hall"]})
    second = write_student_files(tmp_path / "b", {"s01": [f"{START + 10},hall", f"{START + 50},cafe"]})
    log = parse_checkins([first / "s01.csv", second / "s01.csv"], "per-student", make_calendar())

    assert len(log) == 2
    assert [r.reason for r in log.rejections] == ["duplicate record"]
    assert log.rejections[0].source == str(second / "s01.csv")
    assert log.input_lines == len(log) + log.rejected_count


def test_single_file_format_with_tab_header(tmp_path):
    path = tmp_path / "checkins.tsv"
    path.write_text(
        "location\tstudent\ttimestamp\n"
        f"hall\tu1\t{START + 5}\n"
        f"cafe\tu2\t{START + 6}\n"
    )
    log = parse_checkins(path, "single-file", make_calendar())

    assert log.students == ["u1", "u2"]
    assert set(log.frame["location_id"]) == {"hall", "cafe"}


def test_single_file_header_missing_column_is_fatal(tmp_path):
    path = tmp_path / "checkins.csv"
    path.write_text("student,timestamp\nu1,1\n")
    with pytest.raises(IngestError):
        parse_checkins(path, "single-file")


def test_out_of_range_timestamps_rejected_with_calendar(tmp_path):
    cal = make_calendar()
    directory = write_student_files(
        tmp_path / "dining",
        {"s01": [f"{START - 1},hall", f"{START},hall", f"{cal.end_timestamp},hall"]},
    )
    log = parse_checkins(directory, "per-student", cal)

    assert list(log.frame["timestamp"]) == [START]
    assert [r.reason for r in log.rejections] == ["timestamp outside study range"] * 2


def test_stream_input_needs_student_id():
    data = f"{START + 1},hall\n".encode()
    with pytest.raises(IngestError):
        parse_checkins(io.BytesIO(data), "per-student")

    log = parse_checkins(io.BytesIO(data), "per-student", student_id="s09")
    assert log.students == ["s09"]


def test_missing_source_raises_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_checkins(tmp_path / "nope.csv", "single-file")


def test_unknown_format_rejected(dining_dir):
    with pytest.raises(IngestError):
        parse_checkins(dining_dir, "parquet")


def test_empty_source_gives_empty_log(tmp_path):
    directory = write_student_files(tmp_path / "dining", {"s01": []})
    log = parse_checkins(directory, "per-student")
    assert len(log) == 0
    assert log.students == []


def test_day_of_uses_local_midnight():
    """Day boundaries follow the configured offset from UTC."""
    cal = make_calendar(tz_offset=-5 * 3600)
    first_local_midnight = START + 5 * 3600

    assert cal.start_timestamp == first_local_midnight
    assert day_of(first_local_midnight, cal) == 0
    assert day_of(first_local_midnight - 1, cal) == -1
    assert day_of(first_local_midnight + DAY_SECONDS - 1, cal) == 0
    assert day_of(first_local_midnight + DAY_SECONDS, cal) == 1


def test_week_windows_are_half_open():
    cal = make_calendar()
    assert cal.raw_week_of(START) == 1
    assert cal.raw_week_of(START + WEEK - 1) == 1
    assert cal.raw_week_of(START + WEEK) == 2


def test_calendar_rejects_excluded_week_out_of_range():
    with pytest.raises(IngestError):
        make_calendar(excluded=(25,))


def test_excluded_week_renumbering():
    """Raw week 11 is dropped and raw weeks 12-21 become labels 11-20."""
    cal = make_calendar()
    labels = cal.week_labels()
    assert labels[10] == 10
    assert 11 not in labels
    assert labels[12] == 11
    assert labels[21] == 20
    assert cal.label_count == 20


def test_partition_weeks_drops_excluded_week_and_keeps_empty_slices():
    cal = make_calendar()
    log = EventLog.from_records(
        [
            CheckInRecord("a", START + 9 * WEEK + 100, "hall"),  # raw week 10
            CheckInRecord("a", START + 10 * WEEK + 100, "hall"),  # raw week 11
            CheckInRecord("b", START + 11 * WEEK + 100, "hall"),  # raw week 12
            CheckInRecord("b", START + 100, "cafe"),  # raw week 1
        ]
    )
    partition = partition_weeks(log, cal)

    assert partition.labels == list(range(1, 12))
    assert partition.excluded_count == 1
    assert len(partition.slice(1)) == 1
    assert len(partition.slice(5)) == 0
    assert len(partition.slice(10)) == 1
    assert partition.slice(11).records()[0].student_id == "b"
    assert set(partition.slice(11).frame["week"]) == {11}
    assert partition.accepted_count == 3


def test_every_event_lands_in_exactly_one_slice():
    cal = make_calendar(excluded=())
    records = [CheckInRecord(f"s{i % 5}", START + i * 37_003, "hall") for i in range(300)]
    records = [r for r in records if cal.contains(r.timestamp)]
    partition = partition_weeks(EventLog.from_records(records), cal)

    assert partition.accepted_count == len(records)
    assert sum(len(s) for _, s in partition.slices) == len(records)


def test_manifest_counts_are_conserved(tmp_path):
    """input lines = accepted + rejected + excluded-week records."""
    cal = make_calendar()
    directory = write_student_files(
        tmp_path / "dining",
        {
            "s01": [f"{START + 10},hall", f"{START + 10},hall", "x,hall", f"{START + 10 * WEEK + 5},hall"],
            "s02": [f"{START + 11},hall", f"{START - 100},hall"],
        },
    )
    log = parse_checkins(directory, "per-student", cal)
    manifest = build_manifest(log, partition_weeks(log, cal))

    assert manifest["input_lines"] == 6
    assert manifest["accepted"] == 2
    assert manifest["excluded_week_records"] == 1
    assert manifest["rejected"] == 3
    assert manifest["input_lines"] == (
        manifest["accepted"] + manifest["rejected"] + manifest["excluded_week_records"]
    )
    assert manifest["rejection_reasons"]["duplicate record"] == 1


def test_student_week_counts_table():
    cal = make_calendar(excluded=())
    log = EventLog.from_records(
        [
            CheckInRecord("a", START + 10, "hall"),
            CheckInRecord("a", START + 20, "hall"),
            CheckInRecord("b", START + WEEK + 10, "hall"),
        ]
    )
    counts = student_week_counts(partition_weeks(log, cal))

    assert list(counts.columns) == [1, 2]
    assert counts.loc["a", 1] == 2
    assert counts.loc["a", 2] == 0
    assert counts.loc["b", 2] == 1


def test_event_log_csv_round_trip_keeps_identifiers_as_text(tmp_path):
    log = EventLog.from_records([CheckInRecord("007", START, "01")])
    path = tmp_path / "events.csv"
    log.to_csv(path)

    loaded = EventLog.from_csv(path)
    assert loaded.records() == log.records()
