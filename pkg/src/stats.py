"""Trait scores, Spearman rank correlation and correlation tables."""

import itertools
import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats as sp_stats

from .cooccur import CoOccurrenceGraph
from .metrics import SHORT_NAMES, centrality, resolve_kind

SCORE_MIN, SCORE_MAX = 8, 56
TRAIT_FIELDS = ("F1", "F2", "dF")
PVALUE_METHODS = ("auto", "exact", "t", "monte-carlo")
EXACT_MAX_N = 9
MISSING_POLICIES = ("zero", "drop")
STAR_TIERS = ((0.01, "***"), (0.05, "**"), (0.1, "*"))

logger = logging.getLogger(__name__)


class StatsError(ValueError):
    """Raised for undefined or invalid statistical requests."""


class TraitScores:
    """Per-student flourishing scores F1, F2 and dF = F2 - F1."""

    def __init__(self, frame: pd.DataFrame):
        missing = [c for c in ("F1", "F2") if c not in frame.columns]
        if missing:
            raise StatsError(f"Trait scores are missing columns: {missing}")
        frame = frame[["F1", "F2"]].copy()
        frame.index = frame.index.astype(str)
        frame.index.name = "student_id"
        if frame.index.duplicated().any():
            dupes = sorted(set(frame.index[frame.index.duplicated()]))
            raise StatsError(f"Duplicate students in trait scores: {dupes}")

        for col in ("F1", "F2"):
            values = pd.to_numeric(frame[col], errors="coerce")
            if values.isna().any() or (values != values.round()).any():
                raise StatsError(f"{col} must hold integer scores")
            out_of_range = values[(values < SCORE_MIN) | (values > SCORE_MAX)]
            if len(out_of_range):
                raise StatsError(
                    f"{col} outside [{SCORE_MIN}, {SCORE_MAX}] for {list(out_of_range.index)}"
                )
            frame[col] = values.astype(int)

        frame["dF"] = frame["F2"] - frame["F1"]
        self._frame = frame.sort_index()

    @classmethod
    def from_dict(cls, scores: Dict[str, Sequence[int]]) -> "TraitScores":
        """Build from ``{student_id: (F1, F2)}``."""
        frame = pd.DataFrame.from_dict(scores, orient="index", columns=["F1", "F2"])
        return cls(frame)

    @classmethod
    def load(cls, file_path: Union[str, Path]) -> "TraitScores":
        """Load scores from delimited text or a spreadsheet."""
        file_path = Path(file_path)
        if not file_path.exists():
            raise FileNotFoundError(f"Scores file not found: {file_path}")

        suffix = file_path.suffix.lower()
        if suffix in (".xlsx", ".xls"):
            df = pd.read_excel(file_path)
        elif suffix in (".csv", ".txt", ".tsv"):
            df = pd.read_csv(file_path, sep=None, engine="python", dtype=str)
        else:
            raise StatsError(f"Unsupported scores file format: {file_path.suffix}")

        mapping = cls._map_columns(df.columns)
        if "student_id" not in mapping.values():
            mapping[df.columns[0]] = "student_id"
        df = df.rename(columns=mapping)
        missing = [c for c in ("student_id", "F1", "F2") if c not in df.columns]
        if missing:
            raise StatsError(f"{file_path}: missing columns {missing}")
        logger.info(f"Loaded {len(df)} trait score rows from {file_path}")
        return cls(df.set_index("student_id")[["F1", "F2"]])

    @staticmethod
    def _map_columns(columns: Iterable[str]) -> Dict[str, str]:
        """Map score-sheet column names to standard names."""
        patterns = {
            "student_id": ["student_id", "student", "uid", "id"],
            "F1": ["f1", "pre", "flourishing_pre", "score_1", "test1"],
            "F2": ["f2", "post", "flourishing_post", "score_2", "test2"],
        }
        mapping = {}
        for standard_name, possible_names in patterns.items():
            for col in columns:
                if str(col).strip().lower() in possible_names:
                    mapping[col] = standard_name
                    break
        return mapping

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame

    @property
    def students(self) -> List[str]:
        return list(self._frame.index)

    def __len__(self) -> int:
        return len(self._frame)

    def field(self, name: str, roster: Optional[Sequence[str]] = None) -> pd.Series:
        if name not in TRAIT_FIELDS:
            raise StatsError(f"Unknown trait field {name!r}; expected one of {TRAIT_FIELDS}")
        series = self._frame[name]
        return series if roster is None else series.reindex(list(roster))

    def restrict(self, roster: Iterable[str]) -> "TraitScores":
        keep = [s for s in roster if s in self._frame.index]
        return TraitScores(self._frame.loc[keep, ["F1", "F2"]])

    def summary(self) -> pd.DataFrame:
        """Mean and sample sd of F1, F2 and dF."""
        return self._frame.agg(["mean", "std"]).T

    def to_csv(self, path: Union[str, Path]) -> None:
        self._frame[["F1", "F2"]].to_csv(path)


@dataclass(frozen=True)
class CorrelationResult:
    kind: str
    week: int
    trait: str
    n: int
    rho: float
    p_value: float
    stars: str


@dataclass(frozen=True)
class RegularizedSeries:
    """Z-scored relative ranks keyed by student."""

    values: pd.Series
    basis: str = "rank"

    def __len__(self) -> int:
        return len(self.values)


def rank_with_ties(values: Sequence[float]) -> np.ndarray:
    """Average (fractional) ranks, 1-based."""
    array = np.asarray(values, dtype=float)
    if array.size == 0:
        raise StatsError("Cannot rank an empty list")
    if not np.isfinite(array).all():
        raise StatsError("Cannot rank missing or non-finite values")
    return sp_stats.rankdata(array, method="average")


def _validate_pair(x: Sequence[float], y: Sequence[float]) -> None:
    if len(x) != len(y):
        raise StatsError(f"Length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise StatsError(f"Spearman correlation needs n >= 3, got {len(x)}")


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of the tie-averaged ranks."""
    _validate_pair(x, y)
    rx, ry = rank_with_ties(x), rank_with_ties(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise StatsError("Correlation is undefined for a constant series")
    rho = float(np.corrcoef(rx, ry)[0, 1])
    if not math.isfinite(rho):
        raise StatsError("Correlation is undefined for these values")
    return float(np.clip(rho, -1.0, 1.0))


@lru_cache(maxsize=EXACT_MAX_N + 1)
def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int8)


def _permutation_rhos(rx: np.ndarray, ry_matrix: np.ndarray) -> np.ndarray:
    cx = rx - rx.mean()
    cy = ry_matrix - ry_matrix.mean(axis=1, keepdims=True)
    return (cy @ cx) / np.sqrt((cx @ cx) * np.einsum("ij,ij->i", cy, cy))


def spearman_pvalue(
    rho: float,
    n: int,
    method: str = "auto",
    rng: Optional[np.random.Generator] = None,
    x: Optional[Sequence[float]] = None,
    y: Optional[Sequence[float]] = None,
    draws: int = 100_000,
) -> float:
    """
    Two-sided p-value for a Spearman coefficient.

    ``exact`` enumerates all n! rank permutations (n <= 9); ``t`` uses the
    Student t approximation with n-2 degrees of freedom; ``monte-carlo`` draws
    seeded random permutations. ``auto`` is exact for n <= 9 and t otherwise.
    When ``x`` and ``y`` are given their tie-averaged ranks are permuted,
    otherwise the untied ranks 1..n.
    """
    if n < 3:
        raise StatsError(f"p-value needs n >= 3, got {n}")
    if method not in PVALUE_METHODS:
        raise StatsError(f"Unknown p-value method {method!r}")
    if math.isnan(rho):
        return math.nan
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "t"

    if method == "t":
        if abs(rho) >= 1.0:
            return 0.0
        t_stat = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        return float(min(1.0, 2.0 * sp_stats.t.sf(abs(t_stat), n - 2)))

    if x is not None and y is not None:
        if len(x) != n or len(y) != n:
            raise StatsError("x and y must both have length n")
        rx, ry = rank_with_ties(x), rank_with_ties(y)
    else:
        rx = ry = np.arange(1, n + 1, dtype=float)
    tolerance = 1e-12

    if method == "exact":
        if n > EXACT_MAX_N:
            raise StatsError(f"Exact permutation p-values are limited to n <= {EXACT_MAX_N}")
        rhos = _permutation_rhos(rx, ry[_permutations(n)])
        return float(np.mean(np.abs(rhos) >= abs(rho) - tolerance))

    rng = rng if rng is not None else np.random.default_rng(0)
    hits = 0
    chunk = 10_000
    remaining = draws
    while remaining > 0:
        size = min(chunk, remaining)
        shuffled = rng.permuted(np.tile(ry, (size, 1)), axis=1)
        hits += int(np.sum(np.abs(_permutation_rhos(rx, shuffled)) >= abs(rho) - tolerance))
        remaining -= size
    return (hits + 1) / (draws + 1)


def star_tier(p_value: float) -> str:
    """Significance stars: * p<0.1, ** p<0.05, *** p<0.01."""
    if p_value is None or math.isnan(p_value):
        return ""
    for threshold, stars in STAR_TIERS:
        if p_value < threshold:
            return stars
    return ""


def zscore_regularize(
    ranks: Union[Sequence[float], pd.Series], index: Optional[Sequence[str]] = None
) -> RegularizedSeries:
    """(r - mean) / sd with the population sd."""
    series = ranks.astype(float) if isinstance(ranks, pd.Series) else pd.Series(
        np.asarray(ranks, dtype=float), index=index
    )
    if len(series) < 2:
        raise StatsError("Z-score regularization needs at least 2 values")
    sd = float(np.std(series.to_numpy(), ddof=0))
    if sd == 0:
        raise StatsError("Z-score regularization is undefined for constant ranks")
    return RegularizedSeries((series - series.mean()) / sd)


def regularize_by_rank(values: pd.Series) -> RegularizedSeries:
    """Relative ranks of ``values`` (ties averaged), then Z-scored."""
    ranks = pd.Series(rank_with_ties(values.to_numpy()), index=values.index)
    return zscore_regularize(ranks)


def correlate(
    x: Sequence[float], y: Sequence[float], method: str = "auto", rng=None
) -> tuple:
    """(rho, p) with ties handled by permuting the observed ranks."""
    rho = spearman_rho(x, y)
    p = spearman_pvalue(rho, len(x), method, rng=rng, x=x, y=y)
    return rho, p


def correlation_table(
    cumulative_graphs: Sequence[CoOccurrenceGraph],
    scores: TraitScores,
    kinds: Sequence[str] = ("dc", "cc", "bc"),
    roster: Optional[Sequence[str]] = None,
    missing_policy: str = "zero",
    method: str = "auto",
    fields: Sequence[str] = TRAIT_FIELDS,
) -> List[CorrelationResult]:
    """
    Spearman correlation between node centrality and every trait field.

    Students on the roster who are absent from a graph get centrality 0
    (``missing_policy='zero'``) or are left out of that cell (``'drop'``).
    """
    if missing_policy not in MISSING_POLICIES:
        raise StatsError(f"missing_policy must be one of {MISSING_POLICIES}")
    roster = sorted(roster) if roster is not None else scores.students
    roster = [s for s in roster if s in set(scores.students)]
    if not roster:
        raise StatsError("The analysis roster is empty")

    results = []
    for graph in cumulative_graphs:
        for kind in kinds:
            full_kind = resolve_kind(kind)
            if graph.number_of_nodes():
                series = centrality(graph, full_kind).as_series()
            else:
                series = pd.Series(dtype=float)
            if missing_policy == "zero":
                values = series.reindex(roster, fill_value=0.0)
            else:
                values = series.reindex([s for s in roster if s in series.index])

            for field in fields:
                trait = scores.field(field, values.index)
                try:
                    rho, p = correlate(values.to_numpy(), trait.to_numpy(), method)
                except StatsError as e:
                    logger.warning(
                        f"Undefined correlation {SHORT_NAMES[full_kind]}-{field} "
                        f"at {graph.label}: {e}"
                    )
                    rho, p = math.nan, math.nan
                results.append(
                    CorrelationResult(
                        kind=full_kind,
                        week=graph.label.w_to,
                        trait=field,
                        n=len(values),
                        rho=rho,
                        p_value=p,
                        stars=star_tier(p),
                    )
                )
    return results


def results_frame(results: Sequence[CorrelationResult]) -> pd.DataFrame:
    """Machine-readable records, full precision."""
    columns = ["kind", "week", "trait", "n", "rho", "p_value", "stars"]
    return pd.DataFrame([asdict(r) for r in results], columns=columns)


def format_table(results: Sequence[CorrelationResult], decimals: int = 3) -> str:
    """Human table: one row per week, F1/F2/dF column groups per centrality kind."""
    if not results:
        return ""
    kinds = list(dict.fromkeys(r.kind for r in results))
    weeks = sorted({r.week for r in results})
    cells = {(r.week, r.kind, r.trait): r for r in results}
    width = decimals + 7

    header_kinds = "W".ljust(4) + "".join(
        SHORT_NAMES[k].center(width * len(TRAIT_FIELDS)) for k in kinds
    )
    header_fields = " " * 4 + "".join(f.rjust(width) for _ in kinds for f in TRAIT_FIELDS)
    lines = [header_kinds.rstrip(), header_fields]
    for week in weeks:
        row = str(week).ljust(4)
        for kind in kinds:
            for field in TRAIT_FIELDS:
                cell = cells.get((week, kind, field))
                if cell is None or math.isnan(cell.rho):
                    text = "n/a"
                else:
                    text = f"{cell.rho:.{decimals}f}{cell.stars}"
                row += text.rjust(width)
        lines.append(row)
    lines.append("Significance levels: * P < 0.1, ** P < 0.05, *** P < 0.01")
    return "\n".join(lines) + "\n"
