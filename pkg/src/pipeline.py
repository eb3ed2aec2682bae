"""Full analysis pipeline: ingest, build, metrics, null model, correlate, layout."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
import yaml

from . import __version__
from .config import Config
from .cooccur import (
    CoOccurrenceGraph,
    WindowLabel,
    build_cumulative_series,
    build_week_series,
    dining_rate_by_period,
)
from .ingest import EventLog, WeekPartition, build_manifest, parse_checkins, partition_weeks
from .layout import core_periphery_layout, scatter_series, trait_ranks
from .metrics import (
    average_clustering,
    average_degree_by_period,
    centrality,
    node_table,
    summarize,
    topology_frame,
    topology_series,
)
from .nullmodel import ensemble_frame, null_clustering_baseline
from .stats import StatsError, TraitScores, correlation_table, format_table, regularize_by_rank, results_frame

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

logger = logging.getLogger(__name__)


STAGES = ("ingest", "build", "metrics", "nullmodel", "correlate", "layout", "report")


@dataclass
class PipelineResult:
    status: int
    output_dir: Path
    stages: List[str] = field(default_factory=list)
    failed_stage: Optional[str] = None
    warnings: List[str] = field(default_factory=list)
    data: Dict[str, Any] = field(default_factory=dict)


def exit_code_for(error: Exception) -> int:
    """Data problems map to 2, anything else to 3."""
    if isinstance(error, (ValueError, FileNotFoundError, KeyError)):
        return EXIT_DATA
    return EXIT_INTERNAL


def load_roster(path: Optional[str]) -> Optional[List[str]]:
    """Student ids from the first column of a roster file (one per line)."""
    if not path:
        return None
    roster_path = Path(path)
    if not roster_path.exists():
        raise FileNotFoundError(f"Roster file not found: {roster_path}")
    frame = pd.read_csv(roster_path, header=None, dtype=str, comment="#")
    ids = [s.strip() for s in frame.iloc[:, 0] if s.strip()]
    if ids and ids[0].lower() in ("student_id", "student", "uid", "id"):
        ids = ids[1:]
    return ids


def write_graph(graph: CoOccurrenceGraph, graph_dir: Path, witness_dir: Optional[Path] = None) -> None:
    graph.write_edge_list(graph_dir / f"{graph.label.slug}.edges")
    graph.write_json(graph_dir / f"{graph.label.slug}.json")
    if witness_dir is not None:
        graph.write_witnesses(witness_dir / f"{graph.label.slug}_witnesses.csv")


def witness_directory(setting: Any, graph_dir: Path) -> Optional[Path]:
    """Where witness files go: ``true`` means next to the graphs, a string names a directory."""
    if isinstance(setting, str) and setting.strip():
        path = Path(setting)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return graph_dir if setting is True else None


def parse_week_range(text: Optional[str]) -> Optional[WindowLabel]:
    """``all`` (or nothing) means every week; otherwise ``5`` or ``3-7``."""
    if text is None or str(text).strip().lower() in ("", "all"):
        return None
    try:
        label = WindowLabel.parse(str(text))
    except ValueError:
        raise ValueError(f"Invalid week range {text!r}; expected 'all', 'w' or 'first-last'")
    if label.w_from < 1 or label.w_from > label.w_to:
        raise ValueError(f"Invalid week range {text!r}")
    return label


def load_graph_series(graph_dir: Path, prefix: str) -> List[CoOccurrenceGraph]:
    """Graphs written by the build stage (``week_*`` or ``cumulative_*``), ordered by window."""
    if not graph_dir.exists():
        raise FileNotFoundError(f"Graph directory not found: {graph_dir}; run the build stage first")
    graphs = [CoOccurrenceGraph.from_file(p) for p in graph_dir.glob(f"{prefix}_*.json")]
    return sorted(graphs, key=lambda g: g.label)


class Pipeline:
    """
    Runs the analysis stages for one configuration and writes the report bundle.

    Every stage writes its results under the output directory. A stage run on
    its own reads what it needs from files left there by earlier stages.
    """

    def __init__(self, config: Config):
        self.config = config
        self.calendar = config.get_calendar()
        self.threshold = config.get_threshold()
        self.null_config = config.get_null_model_config()
        self.anchor = config.get_anchor_week()
        self.output_dir = config.get_output_dir()
        self.convention = config.get("analysis.clustering_convention", "zeros")
        self.logger = logging.getLogger(__name__)
        self.warnings: List[str] = []
        self.data: Dict[str, Any] = {}

    def _warn(self, message: str) -> None:
        self.logger.warning(f"⚠️ {message}")
        self.warnings.append(message)

    def _require(self, key: str) -> Any:
        if key not in self.data:
            self.data[key] = getattr(self, f"_load_{key}")()
        return self.data[key]

    def _load_log(self) -> EventLog:
        return EventLog.from_csv(self.output_dir / "events.csv")

    def _load_partition(self) -> WeekPartition:
        return partition_weeks(self._require("log"), self.calendar)

    @property
    def graph_dir(self) -> Path:
        return Path(self.config.get("input.graphs") or self.output_dir / "graphs")

    def _load_weekly(self) -> List[CoOccurrenceGraph]:
        return load_graph_series(self.graph_dir, "week")

    def _load_cumulative(self) -> List[CoOccurrenceGraph]:
        return load_graph_series(self.graph_dir, "cumulative")

    def single_graph(self) -> Optional[CoOccurrenceGraph]:
        """The graph named by ``input.graph``, for stages run on one file."""
        path = self.config.get("input.graph")
        if not path:
            return None
        if "single_graph" not in self.data:
            self.data["single_graph"] = CoOccurrenceGraph.from_file(path)
        return self.data["single_graph"]

    def _graphs(self, key: str) -> List[CoOccurrenceGraph]:
        single = self.single_graph()
        return [single] if single is not None else self._require(key)

    def run(self, stages: Optional[Sequence[str]] = None) -> PipelineResult:
        """Run ``stages`` (default: all) in pipeline order."""
        selected = list(STAGES) if stages is None else [s for s in STAGES if s in stages]
        unknown = set(stages or ()) - set(STAGES)
        if unknown:
            raise ValueError(f"Unknown stages: {sorted(unknown)}")

        self.output_dir.mkdir(parents=True, exist_ok=True)
        failure_marker = self.output_dir / "FAILED"
        if failure_marker.exists():
            failure_marker.unlink()

        result = PipelineResult(EXIT_OK, self.output_dir, warnings=self.warnings, data=self.data)
        for name in selected:
            self.logger.info(f"▶️ Stage {name}")
            try:
                getattr(self, f"stage_{name}")()
            except Exception as e:
                self.logger.error(f"❌ Stage {name} failed: {e}")
                failure_marker.write_text(f"stage: {name}\nerror: {type(e).__name__}: {e}\n")
                result.status = exit_code_for(e)
                result.failed_stage = name
                return result
            result.stages.append(name)

        self.logger.info(f"✅ Outputs written to {self.output_dir}")
        return result

    def stage_ingest(self) -> None:
        source = self.config.get("input.path")
        fmt = self.config.get("input.format", "per-student")
        log = parse_checkins(source, fmt, self.calendar)
        partition = partition_weeks(log, self.calendar)
        if len(log) == 0:
            self._warn("The event log is empty; the report will be empty")

        frames = [s.frame for _, s in partition.slices if len(s)]
        events = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
            columns=EventLog.COLUMNS + ["week"]
        )
        events.to_csv(self.output_dir / "events.csv", index=False)
        manifest = build_manifest(log, partition)
        with open(self.output_dir / "ingest_manifest.yaml", "w") as f:
            yaml.safe_dump(manifest, f, sort_keys=True)

        self.data.update(log=log, partition=partition, ingest_manifest=manifest)

    def stage_build(self) -> None:
        partition: WeekPartition = self._require("partition")
        graph_dir = self.output_dir / "graphs"
        graph_dir.mkdir(exist_ok=True)
        witness_dir = witness_directory(self.config.get("cooccurrence.write_witnesses", False), graph_dir)

        weekly = build_week_series(partition, self.threshold, self.calendar)
        weeks = parse_week_range(self.config.get("cooccurrence.weeks"))
        if weeks is not None:
            weekly = [g for g in weekly if weeks.w_from <= g.label.w_to <= weeks.w_to]
        last = max(partition.labels, default=0)
        cumulative: List[CoOccurrenceGraph] = []
        if last >= self.anchor:
            cumulative = build_cumulative_series(partition, self.anchor, self.threshold, self.calendar)
        elif last:
            self._warn(f"Data ends at week {last}, before anchor week {self.anchor}")

        for graph in weekly + cumulative:
            write_graph(graph, graph_dir, witness_dir)
        self.data.update(weekly=weekly, cumulative=cumulative)

    def stage_metrics(self) -> None:
        measures = self.config.get("analysis.measures") or ["dc", "cc", "bc", "clustering"]
        centrality_dir = self.output_dir / "centrality"
        centrality_dir.mkdir(exist_ok=True)

        single = self.single_graph()
        if single is not None:
            if single.number_of_nodes():
                node_table(single, measures).to_csv(centrality_dir / f"{single.label.slug}.csv")
            summary = topology_frame([summarize(single, self.convention)])
            summary.to_csv(self.output_dir / f"{single.label.slug}_summary.csv", index=False)
            self.data["topology"] = summary
            return

        weekly: List[CoOccurrenceGraph] = self._require("weekly")
        summaries = topology_series(weekly, self.convention)
        topology = topology_frame(summaries)
        other = "exclude" if self.convention == "zeros" else "zeros"
        topology[f"average_clustering_{other}"] = [
            average_clustering(g, other) if g.number_of_nodes() else math.nan for g in weekly
        ]
        topology.to_csv(self.output_dir / "topology.csv", index=False)

        rates = dining_rate_by_period(self._require("partition"))
        rates.to_csv(self.output_dir / "dining_rates.csv", index=False)

        for graph in self._require("cumulative"):
            if graph.number_of_nodes():
                node_table(graph, measures).to_csv(
                    centrality_dir / f"{graph.label.slug}.csv"
                )

        self.data.update(
            topology=topology,
            summaries=summaries,
            dining_rates=rates,
            degree_periods=average_degree_by_period(summaries, self.anchor - 1),
        )

    def stage_nullmodel(self) -> None:
        weekly: List[CoOccurrenceGraph] = self._graphs("weekly")
        actual, ensembles = [], []
        for graph in weekly:
            if graph.number_of_edges() < 2:
                self._warn(f"{graph.label} has fewer than 2 edges; no null baseline")
                actual.append(average_clustering(graph, self.convention) if graph.number_of_nodes() else math.nan)
                ensembles.append(None)
                continue
            actual.append(average_clustering(graph, self.convention))
            ensembles.append(null_clustering_baseline(graph, self.null_config, self.convention))

        frame = ensemble_frame(actual, ensembles, [g.label for g in weekly])
        frame.to_csv(self.output_dir / "clustering_null.csv", index=False)
        replicate_rows = [
            {"week": str(g.label), "replicate": i, "clustering": v}
            for g, e in zip(weekly, ensembles)
            if e is not None
            for i, v in enumerate(e.values)
        ]
        pd.DataFrame(replicate_rows, columns=["week", "replicate", "clustering"]).to_csv(
            self.output_dir / "clustering_null_replicates.csv", index=False
        )
        self.data["null_model"] = frame

    def _scores_and_roster(self):
        scores_path = self.config.get("input.scores")
        if not scores_path:
            return None, None
        scores = TraitScores.load(scores_path)
        roster = load_roster(self.config.get("input.roster"))
        if roster is not None:
            scored = set(scores.students)
            unscored = [s for s in roster if s not in scored]
            if unscored:
                self._warn(f"Roster students without scores are left out: {unscored}")
            roster = [s for s in roster if s in scored]
        else:
            if "log" in self.data or (self.output_dir / "events.csv").exists():
                dining = set(self._require("log").students)
                roster = [s for s in scores.students if s in dining]
            else:
                roster = scores.students
        return scores, roster

    def stage_correlate(self) -> None:
        scores, roster = self._scores_and_roster()
        if scores is None:
            self._warn("No scores file configured; skipping correlation and layout")
            return
        cumulative = self._require("cumulative")
        if not cumulative or not roster:
            self._warn("No cumulative graphs or empty roster; skipping correlation")
            self.data.update(scores=scores, roster=roster or [])
            return

        results = correlation_table(
            cumulative,
            scores,
            kinds=self.config.get("analysis.kinds", ["dc", "cc", "bc"]),
            roster=roster,
            missing_policy=self.config.get("analysis.missing_policy", "zero"),
            method=self.config.get("analysis.pvalue_method", "auto"),
        )
        results_frame(results).to_csv(
            self.output_dir / "correlations.csv", index=False, float_format="%.17g"
        )
        decimals = int(self.config.get("report.decimal_places", 3))
        (self.output_dir / "correlation_table.txt").write_text(format_table(results, decimals))
        scores.restrict(roster).summary().to_csv(self.output_dir / "trait_summary.csv")

        self.data.update(
            scores=scores,
            roster=roster,
            correlations=results,
            trait_summary=scores.restrict(roster).summary(),
        )

    def figure_weeks(self) -> List[int]:
        """Anchor, midpoint and final cumulative weeks."""
        cumulative = self._require("cumulative")
        if not cumulative:
            return []
        final = cumulative[-1].label.w_to
        return sorted({self.anchor, (self.anchor + final) // 2, final})

    def stage_layout(self) -> None:
        if "scores" not in self.data:
            self.data["scores"], self.data["roster"] = self._scores_and_roster()
        scores, roster = self.data["scores"], self.data["roster"]
        if scores is None or not roster:
            self.logger.info("No scores or roster; skipping layout")
            return
        kind = self.config.get("analysis.layout_centrality", "dc")
        layout_dir = self.output_dir / "layout"
        layout_dir.mkdir(exist_ok=True)
        single = self.single_graph()
        if single is not None:
            graphs = [single]
        else:
            by_week = {g.label.w_to: g for g in self._require("cumulative")}
            graphs = [by_week[week] for week in self.figure_weeks()]

        for graph in graphs:
            week = graph.label.w_to
            if graph.number_of_nodes() == 0:
                self._warn(f"{graph.label} is empty; no layout")
                continue
            vector = centrality(graph, kind)
            stem = f"{graph.label.slug}_{kind}"
            core_periphery_layout(graph, vector, trait_ranks(scores, graph.nodes)).write(
                layout_dir / f"{stem}_nodes.csv", layout_dir / f"{stem}_edges.csv"
            )

            if self.config.get("analysis.missing_policy", "zero") == "drop":
                values = vector.as_series().reindex([s for s in roster if s in set(graph.nodes)])
            else:
                values = vector.reindexed(roster)
            try:
                scatter = scatter_series(
                    regularize_by_rank(values),
                    regularize_by_rank(scores.field("dF", values.index).astype(float)),
                    self.config.get("analysis.pvalue_method", "auto"),
                )
            except StatsError as e:
                self._warn(f"No scatter data for {graph.label}: {e}")
                continue
            scatter.write(layout_dir / f"{stem}_scatter.csv")
            self.data.setdefault("scatter", {})[week] = {
                "rho": scatter.rho,
                "p_value": scatter.p_value,
                "stars": scatter.stars,
            }

    def stage_report(self) -> None:
        manifest = {
            "version": __version__,
            "seed": int(self.config.get("seed", 0)),
            "config": self.config.as_dict(),
            "null_model": {
                "master_seed": self.null_config.master_seed,
                "replicates": self.null_config.replicate_count,
                "swap_rounds_multiplier": self.null_config.swap_rounds_multiplier,
                "max_attempts_per_round": self.null_config.max_attempts_per_round,
                "count_mode": self.null_config.count_mode,
            },
            "weeks": [int(w) for w in self._require("partition").labels],
            "figure_weeks": self.figure_weeks(),
            "average_degree": {
                k: (None if math.isnan(v) else float(v))
                for k, v in self.data.get("degree_periods", {}).items()
            },
            "scatter": {
                int(w): {k: (v if isinstance(v, str) else float(v)) for k, v in ann.items()}
                for w, ann in self.data.get("scatter", {}).items()
            },
            "warnings": list(self.warnings),
        }
        with open(self.output_dir / "manifest.yaml", "w") as f:
            yaml.safe_dump(manifest, f, sort_keys=True)

        if self.config.get("report.pdf", False):
            from .pdf_generator import PDFGenerator

            PDFGenerator(self.config, str(self.output_dir)).generate_report(self.data)


def run_pipeline(config: Config) -> PipelineResult:
    """Run every stage; a failing stage leaves partial outputs plus a ``FAILED`` marker."""
    return Pipeline(config).run()
