"""Check-in log ingestion and weekly partitioning.

Dining logs arrive either as one delimited file per student (the student id is
the file stem) or as one file with an explicit student column. Each line holds a
timestamp in epoch seconds and a location; extra columns are ignored.
"""

import calendar as _calendar
import io
import logging
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dateutil import parser as date_parser

DAY_SECONDS = 86400
WEEK_DAYS = 7

FORMATS = ("per-student", "single-file")
LOG_SUFFIXES = {".csv", ".txt", ".tsv"}
TIMESTAMP_LIMIT = float(2**63)

logger = logging.getLogger(__name__)


class IngestError(ValueError):
    """Raised when a check-in source cannot be read at all."""


@dataclass(frozen=True)
class CheckInRecord:
    """One dining event."""

    student_id: str
    timestamp: int
    location_id: str

    def __post_init__(self):
        if not self.student_id or not self.location_id:
            raise IngestError("student_id and location_id must be non-empty")


@dataclass(frozen=True)
class StudyCalendar:
    """Maps timestamps onto local days and 7-day study weeks.

    Weeks are half-open ``[start, start + 7d)``. Raw week indices are 1-based;
    excluded raw weeks produce no window and the remaining weeks are renumbered
    densely in order.
    """

    study_start: date
    n_weeks: int = 21
    excluded_week_indices: FrozenSet[int] = frozenset()
    tz_offset: int = 0
    week_length: int = field(default=WEEK_DAYS, init=False)

    def __post_init__(self):
        if self.n_weeks < 1:
            raise IngestError("n_weeks must be at least 1")
        bad = [w for w in self.excluded_week_indices if not 1 <= w <= self.n_weeks]
        if bad:
            raise IngestError(f"excluded weeks outside 1..{self.n_weeks}: {bad}")

    @classmethod
    def from_values(
        cls,
        study_start: Union[str, date, datetime, None],
        n_weeks: int = 21,
        excluded_weeks: Iterable[int] = (),
        tz_offset: int = 0,
    ) -> "StudyCalendar":
        """Build a calendar from loosely typed config or CLI values."""
        if study_start is None:
            raise IngestError("study_start is required")
        if isinstance(study_start, datetime):
            start = study_start.date()
        elif isinstance(study_start, date):
            start = study_start
        else:
            start = date_parser.isoparse(str(study_start)).date()
        return cls(
            study_start=start,
            n_weeks=int(n_weeks),
            excluded_week_indices=frozenset(int(w) for w in excluded_weeks),
            tz_offset=int(tz_offset),
        )

    @property
    def midnight_epoch(self) -> int:
        """``study_start`` 00:00 read as UTC, in epoch seconds."""
        return _calendar.timegm(self.study_start.timetuple())

    @property
    def start_timestamp(self) -> int:
        """First epoch second of the study (local midnight of study_start)."""
        return self.midnight_epoch - self.tz_offset

    @property
    def end_timestamp(self) -> int:
        """First epoch second after the study range."""
        return self.start_timestamp + self.n_weeks * WEEK_DAYS * DAY_SECONDS

    def contains(self, timestamp: int) -> bool:
        return self.start_timestamp <= timestamp < self.end_timestamp

    def day_of(self, timestamp: int) -> int:
        return (int(timestamp) + self.tz_offset - self.midnight_epoch) // DAY_SECONDS

    def days_of(self, timestamps: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`day_of`."""
        values = np.asarray(timestamps, dtype=np.int64)
        return np.floor_divide(values + self.tz_offset - self.midnight_epoch, DAY_SECONDS)

    def raw_week_of(self, timestamp: int) -> int:
        return self.day_of(timestamp) // WEEK_DAYS + 1

    def week_labels(self) -> Dict[int, int]:
        """Raw week index -> dense label, for every non-excluded week."""
        labels = {}
        label = 0
        for raw in range(1, self.n_weeks + 1):
            if raw in self.excluded_week_indices:
                continue
            label += 1
            labels[raw] = label
        return labels

    @property
    def label_count(self) -> int:
        return self.n_weeks - len(self.excluded_week_indices)


def day_of(timestamp: int, cal: StudyCalendar) -> int:
    """Calendar day index of ``timestamp`` relative to the study start."""
    return cal.day_of(timestamp)


@dataclass(frozen=True)
class Rejection:
    """A line that did not become a record."""

    source: str
    line: int
    reason: str


class EventLog:
    """Immutable, time-sorted collection of check-in records.

    The records live in a pandas frame with columns ``student_id``,
    ``timestamp`` and ``location_id`` (plus ``week`` for partition slices).
    Exact duplicate triples are dropped on construction.
    """

    COLUMNS = ["student_id", "timestamp", "location_id"]

    def __init__(
        self,
        frame: Optional[pd.DataFrame] = None,
        rejections: Optional[Sequence[Rejection]] = None,
        input_lines: Optional[int] = None,
    ):
        if frame is None:
            frame = pd.DataFrame(columns=self.COLUMNS)
        missing = [c for c in self.COLUMNS if c not in frame.columns]
        if missing:
            raise IngestError(f"event frame is missing columns: {missing}")

        frame = frame.copy()
        frame["student_id"] = frame["student_id"].astype(str)
        frame["location_id"] = frame["location_id"].astype(str)
        frame["timestamp"] = frame["timestamp"].astype(np.int64)

        duplicated = frame.duplicated(subset=self.COLUMNS)
        if duplicated.any():
            logger.warning(f"Dropping {int(duplicated.sum())} duplicate check-in records")
            frame = frame[~duplicated]

        frame = frame.sort_values(
            ["timestamp", "student_id", "location_id"], kind="mergesort"
        ).reset_index(drop=True)

        self._frame = frame
        self.rejections: Tuple[Rejection, ...] = tuple(rejections or ())
        self.input_lines = len(frame) + len(self.rejections) if input_lines is None else input_lines

    @classmethod
    def from_records(cls, records: Iterable[CheckInRecord]) -> "EventLog":
        rows = [(r.student_id, r.timestamp, r.location_id) for r in records]
        return cls(pd.DataFrame(rows, columns=cls.COLUMNS))

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "EventLog":
        """Load a normalised event table written by :meth:`to_csv`."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Event file not found: {path}")
        frame = pd.read_csv(
            path, dtype={"student_id": str, "location_id": str}, keep_default_na=False
        )
        return cls(frame)

    def to_csv(self, path: Union[str, Path]) -> None:
        self._frame.to_csv(path, index=False)

    @property
    def frame(self) -> pd.DataFrame:
        """The sorted record table. Treat as read-only."""
        return self._frame

    def __len__(self) -> int:
        return len(self._frame)

    @property
    def students(self) -> List[str]:
        return sorted(self._frame["student_id"].unique().tolist())

    @property
    def accepted_count(self) -> int:
        return len(self._frame)

    @property
    def rejected_count(self) -> int:
        return len(self.rejections)

    def records(self) -> List[CheckInRecord]:
        return [
            CheckInRecord(s, int(t), loc)
            for s, t, loc in self._frame[self.COLUMNS].itertuples(index=False)
        ]

    def by_student(self) -> Dict[str, List[CheckInRecord]]:
        """Per-student record lists, each sorted by timestamp."""
        grouped: Dict[str, List[CheckInRecord]] = {}
        for record in self.records():
            grouped.setdefault(record.student_id, []).append(record)
        return grouped

    def with_days(self, cal: StudyCalendar) -> pd.DataFrame:
        """Copy of the frame with a ``day`` column from ``cal``."""
        frame = self._frame.copy()
        frame["day"] = cal.days_of(frame["timestamp"].to_numpy())
        return frame

    def buckets(self, cal: StudyCalendar) -> Dict[Tuple[str, int], pd.DataFrame]:
        """Per-(location, day) sub-frames, each sorted by timestamp."""
        frame = self.with_days(cal)
        return {
            (str(loc), int(day)): part
            for (loc, day), part in frame.groupby(["location_id", "day"], sort=True)
        }

    @staticmethod
    def concat(logs: Sequence["EventLog"]) -> "EventLog":
        frames = [log.frame for log in logs if len(log)]
        if not frames:
            return EventLog()
        return EventLog(pd.concat(frames, ignore_index=True))


def _map_columns(header: Sequence[str]) -> Dict[str, int]:
    """Map header names to record fields (flexible column names)."""
    patterns = {
        "student_id": ["student", "student_id", "studentid", "uid", "user", "user_id"],
        "timestamp": ["timestamp", "time", "ts", "epoch", "datetime"],
        "location_id": ["location", "location_id", "venue", "place", "dining_location"],
    }
    mapping = {}
    for standard_name, possible_names in patterns.items():
        for index, col in enumerate(header):
            if col.strip().lower() in possible_names:
                mapping[standard_name] = index
                break
    return mapping


def _looks_like_header(fields: Sequence[str]) -> bool:
    numeric = pd.to_numeric(pd.Series(list(fields), dtype=object), errors="coerce")
    return bool(_map_columns(fields)) and not numeric.notna().any()


def _read_text(source: Any) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8-sig")
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8-sig") if isinstance(data, bytes) else data
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"Check-in source not found: {path}")
    try:
        return path.read_text(encoding="utf-8-sig")
    except (OSError, UnicodeDecodeError) as e:
        raise IngestError(f"Cannot read check-in source {path}: {e}")


def _read_fields(text: str, min_width: int = 3) -> Tuple[pd.DataFrame, pd.Series]:
    """
    One row of string fields per line of ``text``; row ``i`` is line ``i + 1``.

    Tab-separated when the first non-blank line has a tab, comma-separated
    otherwise. Also returns the number of fields on each line, since short
    lines are padded out to the widest one.
    """
    lines = pd.Series(text.replace("\r\n", "\n").replace("\r", "\n").split("\n"))
    first = lines[lines.str.strip() != ""].iloc[0]
    sep = "\t" if "\t" in first else ","
    field_counts = lines.str.count(sep) + 1
    width = max(int(field_counts.max()), min_width)
    frame = pd.read_csv(
        io.StringIO(text),
        sep=sep,
        header=None,
        names=list(range(width)),
        index_col=False,
        dtype=str,
        keep_default_na=False,
        skip_blank_lines=False,
    )
    return frame, field_counts


def _parse_text(
    text: str,
    source_name: str,
    fmt: str,
    student_id: Optional[str],
    cal: Optional[StudyCalendar],
) -> Tuple[List[Tuple[int, Tuple[str, int, str]]], List[Tuple[int, Rejection]], int]:
    """Parse one text source. Returns rows (with line numbers), rejections, line count."""
    if not text.strip():
        return [], [], 0

    frame, field_counts = _read_fields(text)
    cells = frame.fillna("")
    blank = cells.apply(lambda col: col.str.strip() == "").all(axis=1)
    body = frame[~blank]
    if body.empty:
        return [], [], 0

    if fmt == "per-student":
        columns = {"timestamp": 0, "location_id": 1}
    else:
        columns = {"student_id": 0, "timestamp": 1, "location_id": 2}

    header = [str(f) for f in body.iloc[0].dropna()]
    if _looks_like_header(header):
        mapped = _map_columns(header)
        required = ["timestamp", "location_id"]
        if fmt == "single-file":
            required.append("student_id")
        if not all(r in mapped for r in required):
            raise IngestError(f"{source_name}: header lacks columns {required}")
        columns = {k: mapped[k] for k in required}
        body = body.iloc[1:]

    short = (field_counts.reindex(body.index) <= max(columns.values())).to_numpy()
    cells = body.fillna("")
    raw_ts = cells[columns["timestamp"]].str.strip()
    values = pd.to_numeric(raw_ts, errors="coerce").astype(float).to_numpy()
    non_numeric = np.isnan(values)
    # also catches inf and values that do not fit in int64
    out_of_range = ~non_numeric & ~(np.abs(values) < TIMESTAMP_LIMIT)
    usable = ~(short | non_numeric | out_of_range)
    # sub-second input is truncated
    timestamps = np.where(usable, np.trunc(np.where(usable, values, 0.0)), 0).astype(np.int64)

    if "student_id" in columns:
        sids = cells[columns["student_id"]].str.strip().to_numpy()
    else:
        sids = np.full(len(body), student_id or "", dtype=object)
    locations = cells[columns["location_id"]].str.strip().to_numpy()
    if cal is not None:
        outside = (timestamps < cal.start_timestamp) | (timestamps >= cal.end_timestamp)
    else:
        outside = np.zeros(len(body), dtype=bool)

    rows, rejections = [], []
    for i, index in enumerate(body.index):
        line_no = int(index) + 1
        if short[i]:
            reason = "too few fields"
        elif non_numeric[i]:
            reason = f"non-numeric timestamp {raw_ts.iat[i]!r}"
        elif out_of_range[i]:
            reason = f"timestamp out of range {raw_ts.iat[i]!r}"
        elif not sids[i] or not locations[i]:
            reason = "empty identifier"
        elif outside[i]:
            reason = "timestamp outside study range"
        else:
            rows.append((line_no, (str(sids[i]), int(timestamps[i]), str(locations[i]))))
            continue
        rejections.append((line_no, Rejection(source_name, line_no, reason)))

    return rows, rejections, len(body)


def _per_student_sources(source: Any) -> List[Tuple[Any, str]]:
    if isinstance(source, (list, tuple)):
        return [(Path(p), Path(p).stem) for p in sorted(source, key=str)]
    path = Path(source)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in LOG_SUFFIXES)
        return [(p, p.stem) for p in files]
    return [(path, path.stem)]


def parse_checkins(
    source: Any,
    fmt: str = "per-student",
    cal: Optional[StudyCalendar] = None,
    student_id: Optional[str] = None,
) -> EventLog:
    """
    Parse check-in logs into an :class:`EventLog`.

    Args:
        source: A file path, a directory of per-student files, a list of paths,
            raw bytes or a binary/text stream.
        fmt: ``per-student`` (student id from the file stem or ``student_id``)
            or ``single-file`` (student id in the first / ``student`` column).
        cal: When given, timestamps outside the study range are rejected.
        student_id: Explicit student id for a single per-student stream.

    Returns:
        EventLog holding the accepted records and the per-line rejections.
    """
    if fmt not in FORMATS:
        raise IngestError(f"Unknown ingest format {fmt!r}; expected one of {FORMATS}")

    if isinstance(source, (bytes, bytearray)) or hasattr(source, "read"):
        if fmt == "per-student" and not student_id:
            raise IngestError("A per-student stream needs an explicit student_id")
        sources = [(source, student_id or "<stream>")]
    elif fmt == "per-student":
        sources = _per_student_sources(source)
        if student_id and len(sources) == 1:
            sources = [(sources[0][0], student_id)]
    else:
        sources = [(Path(source), Path(source).name)]

    rows: List[Tuple[str, int, str]] = []
    rejections: List[Rejection] = []
    input_lines = 0
    # duplicates are rejected across sources too (two files may share a stem)
    seen = set()
    for src, name in sources:
        text = _read_text(src)
        source_name = str(src) if isinstance(src, Path) else name
        parsed, rejected, count = _parse_text(
            text, source_name, fmt, name if fmt == "per-student" else None, cal
        )
        input_lines += count

        for line_no, row in parsed:
            if row in seen:
                rejected.append((line_no, Rejection(source_name, line_no, "duplicate record")))
                continue
            seen.add(row)
            rows.append(row)
        rejections.extend(r for _, r in sorted(rejected, key=lambda item: item[0]))

    duplicates = sum(1 for r in rejections if r.reason == "duplicate record")
    if duplicates:
        logger.warning(f"Deduplicated {duplicates} identical check-in records")
    if rejections:
        logger.warning(f"Rejected {len(rejections)} of {input_lines} check-in lines")
    logger.info(f"Parsed {len(rows)} check-in records from {len(sources)} source(s)")

    frame = pd.DataFrame(rows, columns=EventLog.COLUMNS)
    return EventLog(frame, rejections=rejections, input_lines=input_lines)


@dataclass
class WeekPartition:
    """Ordered weekly slices of an event log."""

    slices: List[Tuple[int, EventLog]]
    excluded_count: int = 0
    rejected_count: int = 0
    calendar: Optional[StudyCalendar] = None

    @property
    def labels(self) -> List[int]:
        return [label for label, _ in self.slices]

    def slice(self, label: int) -> EventLog:
        for week, log in self.slices:
            if week == label:
                return log
        raise KeyError(f"No week labelled {label}")

    def span(self, w_from: int, w_to: int) -> EventLog:
        """Concatenation of slices ``w_from..w_to`` inclusive."""
        return EventLog.concat([log for week, log in self.slices if w_from <= week <= w_to])

    @property
    def accepted_count(self) -> int:
        return sum(len(log) for _, log in self.slices)


def partition_weeks(log: EventLog, cal: StudyCalendar) -> WeekPartition:
    """
    Split ``log`` into labelled weekly windows.

    Slices run from label 1 to the label of the latest non-excluded event; a
    week with no events still gets an empty slice.
    """
    frame = log.frame.copy()
    days = cal.days_of(frame["timestamp"].to_numpy())
    raw_weeks = days // WEEK_DAYS + 1

    before = days < 0
    after = raw_weeks > cal.n_weeks
    if before.any():
        logger.warning(f"Rejected {int(before.sum())} events before the study start")
    if after.any():
        logger.warning(f"Rejected {int(after.sum())} events after the study end")

    label_map = cal.week_labels()
    in_range = ~(before | after)
    excluded = in_range & np.isin(raw_weeks, sorted(cal.excluded_week_indices))
    if excluded.any():
        logger.info(f"Dropped {int(excluded.sum())} events in excluded weeks")

    keep = in_range & ~excluded
    frame = frame[keep].copy()
    frame["week"] = [label_map[int(w)] for w in raw_weeks[keep]]

    slices: List[Tuple[int, EventLog]] = []
    last_label = int(frame["week"].max()) if len(frame) else 0
    for label in range(1, last_label + 1):
        part = frame[frame["week"] == label]
        slices.append((label, EventLog(part)))

    return WeekPartition(
        slices=slices,
        excluded_count=int(excluded.sum()),
        rejected_count=int((before | after).sum()),
        calendar=cal,
    )


def student_week_counts(partition: WeekPartition) -> pd.DataFrame:
    """Per-student, per-week record counts (rows: students, columns: week labels)."""
    frames = [log.frame for _, log in partition.slices if len(log)]
    if not frames:
        return pd.DataFrame()
    events = pd.concat(frames, ignore_index=True)
    counts = events.pivot_table(
        index="student_id", columns="week", values="timestamp", aggfunc="count", fill_value=0
    )
    counts = counts.reindex(columns=partition.labels, fill_value=0)
    counts.columns = [int(c) for c in counts.columns]
    return counts.astype(int)


def build_manifest(log: EventLog, partition: WeekPartition) -> Dict[str, Any]:
    """Structured summary of an ingest run (record counts per student and week)."""
    counts = student_week_counts(partition)
    reasons: Dict[str, int] = {}
    for rejection in log.rejections:
        key = rejection.reason.split(" '")[0]
        reasons[key] = reasons.get(key, 0) + 1

    return {
        "input_lines": int(log.input_lines),
        "accepted": int(partition.accepted_count),
        "rejected": int(log.rejected_count + partition.rejected_count),
        "excluded_week_records": int(partition.excluded_count),
        "rejection_reasons": reasons,
        "rejections": [
            {"source": r.source, "line": r.line, "reason": r.reason}
            for r in log.rejections
        ],
        "weeks": {
            int(week): int(len(slice_log)) for week, slice_log in partition.slices
        },
        "students": {
            str(student): {int(w): int(n) for w, n in row.items() if n}
            for student, row in counts.iterrows()
        },
    }
