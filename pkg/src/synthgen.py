"""Synthetic dining cohorts with planted co-dining structure.

Each study day every student makes solo check-ins at random locations and
times; on top of that every student pair shares a meal with a per-day
propensity (``p_core`` inside the core group, ``p_peri`` otherwise). A shared
meal places the partner's check-in within ``T/2`` of the initiator's. The
flourishing change dF is linear in the number of planted partners plus
Gaussian noise.
"""

import itertools
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Set, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from .ingest import DAY_SECONDS, WEEK_DAYS, EventLog, StudyCalendar
from .stats import SCORE_MAX, SCORE_MIN, TraitScores

logger = logging.getLogger(__name__)

TRAIT_CENTER = 44
SOLO_PLACEMENT_ATTEMPTS = 200


class CohortSpecError(ValueError):
    """Raised for infeasible cohort specifications."""


@dataclass(frozen=True)
class CohortSpec:
    student_count: int = 30
    location_count: int = 7
    weeks: int = 20
    core_fraction: float = 0.3
    p_core: float = 0.3
    p_peri: float = 0.02
    meals_per_student_per_week: float = 14.0
    trait_slope: float = 1.0
    trait_noise_sd: float = 0.0
    # label range whose planted partners drive dF; None means every week
    trait_window: Optional[Tuple[int, int]] = None
    threshold_seconds: int = 1200
    study_start: str = "2013-01-06"
    tz_offset: int = -5 * 3600
    open_hour: float = 7.0
    close_hour: float = 22.0
    seed: int = 0

    def __post_init__(self):
        if self.student_count < 1 or self.weeks < 1:
            raise CohortSpecError("student_count and weeks must be at least 1")
        if self.location_count < 1:
            raise CohortSpecError("location_count must be at least 1")
        if not 0.0 < self.core_fraction < 1.0:
            raise CohortSpecError("core_fraction must lie in (0, 1)")
        for name in ("p_core", "p_peri"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise CohortSpecError(f"{name} must lie in [0, 1]")
        if self.p_core < self.p_peri:
            raise CohortSpecError("p_core must not be below p_peri")
        if self.meals_per_student_per_week < 0 or self.trait_noise_sd < 0:
            raise CohortSpecError("meal rate and noise sd must be non-negative")
        half = self.threshold_seconds / 2
        if self.open_hour * 3600 < half or self.close_hour * 3600 + half >= DAY_SECONDS:
            raise CohortSpecError("dining hours leave no room for partner placement within the day")
        if self.open_hour >= self.close_hour:
            raise CohortSpecError("open_hour must precede close_hour")

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "CohortSpec":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Cohort spec not found: {path}")
        with open(path, "r") as f:
            values = yaml.safe_load(f) or {}
        if "trait_window" in values and values["trait_window"] is not None:
            values["trait_window"] = tuple(values["trait_window"])
        try:
            return cls(**values)
        except TypeError as e:
            raise CohortSpecError(f"Invalid cohort spec {path}: {e}")

    @property
    def calendar(self) -> StudyCalendar:
        return StudyCalendar.from_values(self.study_start, self.weeks, (), self.tz_offset)

    @property
    def core_size(self) -> int:
        return max(1, int(round(self.core_fraction * self.student_count)))

    def student_ids(self) -> List[str]:
        width = max(2, len(str(self.student_count)))
        return [f"s{i:0{width}d}" for i in range(1, self.student_count + 1)]

    def location_ids(self) -> List[str]:
        width = max(2, len(str(self.location_count)))
        return [f"loc{i:0{width}d}" for i in range(1, self.location_count + 1)]


@dataclass
class Cohort:
    """Generated events, scores and the ground truth they were planted from."""

    log: EventLog
    scores: TraitScores
    partner_counts: pd.Series
    core: FrozenSet[str]
    planted_pairs: Set[Tuple[str, str]] = field(default_factory=set)
    weekly_pairs: Dict[int, Set[Tuple[str, str]]] = field(default_factory=dict)


def generate_cohort(spec: CohortSpec) -> Cohort:
    """Draw a cohort; fully determined by ``spec`` (including its seed)."""
    rng = np.random.default_rng(spec.seed)
    cal = spec.calendar
    students = spec.student_ids()
    locations = spec.location_ids()
    n = len(students)
    core = frozenset(students[: spec.core_size])

    pairs = list(itertools.combinations(range(n), 2))
    propensity = np.array(
        [
            spec.p_core if students[a] in core and students[b] in core else spec.p_peri
            for a, b in pairs
        ]
    )
    expected_joint = np.zeros(n)
    for (a, b), p in zip(pairs, propensity):
        expected_joint[a] += p
        expected_joint[b] += p
    solo_rate = np.maximum(spec.meals_per_student_per_week / WEEK_DAYS - expected_joint, 0.0)

    open_s, close_s = int(spec.open_hour * 3600), int(spec.close_hour * 3600)
    half = spec.threshold_seconds // 2
    rows: List[Tuple[str, int, str]] = []
    weekly_pairs: Dict[int, Set[Tuple[str, str]]] = {}

    skipped = 0
    for day in range(spec.weeks * WEEK_DAYS):
        week = day // WEEK_DAYS + 1
        day_start = cal.start_timestamp + day * DAY_SECONDS
        placed: Dict[str, List[Tuple[int, str]]] = {}

        shared = np.flatnonzero(rng.random(len(pairs)) < propensity) if pairs else []
        for pair_index in shared:
            a, b = pairs[pair_index]
            location = locations[int(rng.integers(len(locations)))]
            t_a = day_start + int(rng.integers(open_s, close_s))
            t_b = t_a + int(rng.integers(-half, half + 1))
            for student, t in ((students[a], t_a), (students[b], t_b)):
                rows.append((student, t, location))
                placed.setdefault(location, []).append((t, student))
            weekly_pairs.setdefault(week, set()).add((students[a], students[b]))

        # solo meals never fall within T of another student at the same place
        solo_counts = rng.poisson(solo_rate)
        for index, count in enumerate(solo_counts):
            for _ in range(int(count)):
                for _attempt in range(SOLO_PLACEMENT_ATTEMPTS):
                    location = locations[int(rng.integers(len(locations)))]
                    t = day_start + int(rng.integers(open_s, close_s))
                    if not _crowded(placed.get(location, ()), t, students[index], spec.threshold_seconds):
                        rows.append((students[index], t, location))
                        placed.setdefault(location, []).append((t, students[index]))
                        break
                else:
                    skipped += 1

    if skipped:
        logger.warning(f"⚠️ Skipped {skipped} solo meals with no free slot")

    log = EventLog(pd.DataFrame(rows, columns=EventLog.COLUMNS))

    first, last = spec.trait_window or (1, spec.weeks)
    planted = set()
    for week, week_pairs in weekly_pairs.items():
        if first <= week <= last:
            planted |= week_pairs
    counts = pd.Series(0, index=students, dtype=int)
    for a, b in planted:
        counts[a] += 1
        counts[b] += 1

    scores = _draw_scores(spec, counts, rng)
    logger.info(
        f"Generated cohort: {n} students, {len(log)} check-ins, "
        f"{len(planted)} planted pairs, core size {len(core)}"
    )
    return Cohort(log, scores, counts, core, planted, weekly_pairs)


def _crowded(placed, t: int, student: str, threshold: int) -> bool:
    return any(other != student and abs(t - t_other) <= threshold for t_other, other in placed)


def _draw_scores(spec: CohortSpec, counts: pd.Series, rng: np.random.Generator) -> TraitScores:
    """dF = slope * (partners - mean) + noise, truncated so F1 and F2 stay in range."""
    centered = counts.to_numpy(dtype=float) - counts.mean()
    noise = rng.normal(0.0, spec.trait_noise_sd, len(counts)) if spec.trait_noise_sd > 0 else 0.0
    span = SCORE_MAX - SCORE_MIN
    delta = np.clip(np.rint(spec.trait_slope * centered + noise), -span, span).astype(int)

    scores = {}
    for student, dF in zip(counts.index, delta):
        low, high = max(SCORE_MIN, SCORE_MIN - dF), min(SCORE_MAX, SCORE_MAX - dF)
        f1 = int(np.clip(np.rint(rng.normal(TRAIT_CENTER, 6.0)), low, high))
        scores[student] = (f1, f1 + int(dF))
    return TraitScores.from_dict(scores)


def write_cohort(cohort: Cohort, spec: CohortSpec, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write per-student check-in files, a scores file and a ground-truth sidecar."""
    out_dir = Path(out_dir)
    dining_dir = out_dir / "dining"
    dining_dir.mkdir(parents=True, exist_ok=True)

    frame = cohort.log.frame
    for student in spec.student_ids():
        part = frame[frame["student_id"] == student]
        part[["timestamp", "location_id"]].rename(columns={"location_id": "location"}).to_csv(
            dining_dir / f"{student}.csv", index=False
        )

    scores_path = out_dir / "scores.csv"
    cohort.scores.to_csv(scores_path)

    truth = {
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
        "core": sorted(cohort.core),
        "partner_counts": {k: int(v) for k, v in cohort.partner_counts.items()},
        "planted_pairs": [list(p) for p in sorted(cohort.planted_pairs)],
    }
    truth_path = out_dir / "ground_truth.yaml"
    with open(truth_path, "w") as f:
        yaml.safe_dump(truth, f, sort_keys=True)

    logger.info(f"Wrote synthetic cohort to {out_dir}")
    return {"dining": dining_dir, "scores": scores_path, "ground_truth": truth_path}
