#!/usr/bin/env python3
"""
Dining Co-occurrence Network Analysis

Rebuilds weekly student co-dining networks from dining check-in logs, compares
their clustering against degree-preserving null models, and correlates node
centrality with flourishing-score changes.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from src.config import Config
from src.pipeline import EXIT_OK, EXIT_USAGE, Pipeline, exit_code_for
from src.synthgen import CohortSpec, generate_cohort, write_cohort

# argparse dest -> dotted config key; flags win over the config file
CONFIG_OVERRIDES = {
    "output_dir": "output.directory",
    "seed": "seed",
    "input": "input.path",
    "format": "input.format",
    "scores": "input.scores",
    "roster": "input.roster",
    "study_start": "calendar.study_start",
    "n_weeks": "calendar.n_weeks",
    "exclude_weeks": "calendar.excluded_weeks",
    "tz_offset": "calendar.tz_offset",
    "threshold": "cooccurrence.threshold_seconds",
    "witnesses": "cooccurrence.write_witnesses",
    "weeks": "cooccurrence.weeks",
    "graph": "input.graph",
    "graphs": "input.graphs",
    "measures": "analysis.measures",
    "replicates": "null_model.replicates",
    "rounds_multiplier": "null_model.swap_rounds_multiplier",
    "max_attempts": "null_model.max_attempts_per_round",
    "count_mode": "null_model.count_mode",
    "anchor_week": "analysis.anchor_week",
    "kinds": "analysis.kinds",
    "missing_policy": "analysis.missing_policy",
    "pvalue_method": "analysis.pvalue_method",
    "clustering_convention": "analysis.clustering_convention",
    "centrality": "analysis.layout_centrality",
    "pdf": "report.pdf",
}

STAGE_COMMANDS = {
    "ingest": ["ingest"],
    "build": ["build"],
    "metrics": ["metrics"],
    "nullmodel": ["nullmodel"],
    "correlate": ["correlate"],
    "layout": ["layout"],
    "run": None,
}


class CLIArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def setup_logging(verbose: bool = False):
    """Setup logging configuration."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def name_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", "-c", type=str, default="config.yaml",
        help="Configuration file path (default: config.yaml)",
    )
    parser.add_argument(
        "--output-dir", "-o", type=str,
        help="Directory for the report bundle (default from config: output/)",
    )
    parser.add_argument("--seed", type=int, help="Master random seed")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")


def add_ingest_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("ingest")
    group.add_argument("--input", "-i", type=str, help="Check-in directory or file")
    group.add_argument(
        "--format", choices=["per-student", "single-file"], help="Check-in file layout"
    )
    group.add_argument("--study-start", type=str, help="First study day (YYYY-MM-DD)")
    group.add_argument("--n-weeks", type=int, help="Raw weeks in the study")
    group.add_argument(
        "--exclude-weeks", type=int_list, help="Comma-separated raw week indices to drop"
    )
    group.add_argument(
        "--tz-offset", type=int, help="Seconds east of UTC used for day boundaries"
    )


def add_build_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("build")
    group.add_argument("--threshold", "-T", type=int, help="Co-occurrence threshold in seconds")
    group.add_argument(
        "--anchor-week", "--cumulative-from", dest="anchor_week", type=int,
        help="First week of the cumulative networks",
    )
    group.add_argument("--weeks", type=str, help="Weekly graphs to write: all, w or first-last")
    group.add_argument(
        "--witnesses", nargs="?", const=True, metavar="DIR",
        help="Write edge witness files, next to the graphs or into DIR",
    )


def add_metrics_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument_group("metrics").add_argument(
        "--clustering-convention", choices=["zeros", "exclude"],
        help="How degree<2 nodes enter the average clustering",
    )


def add_nullmodel_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("null model")
    group.add_argument("--replicates", type=int, help="Null graphs per week")
    group.add_argument(
        "--rounds-multiplier", "--multiplier", dest="rounds_multiplier", type=int,
        help="Swap rounds per edge",
    )
    group.add_argument("--max-attempts", type=int, help="Attempt budget per required swap")
    group.add_argument(
        "--count-mode", choices=["accepted", "attempts"], help="What counts as a swap round"
    )


def add_correlate_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("correlate")
    group.add_argument("--scores", type=str, help="Flourishing scores (csv/tsv/xlsx)")
    group.add_argument("--roster", type=str, help="Analysis roster, one student id per line")
    group.add_argument("--kinds", type=name_list, help="Centralities, e.g. dc,cc,bc")
    group.add_argument("--missing-policy", choices=["zero", "drop"])
    group.add_argument("--pvalue-method", choices=["auto", "exact", "t", "monte-carlo"])


def add_layout_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument_group("layout").add_argument(
        "--centrality", choices=["dc", "cc", "bc"], help="Centrality driving the ring layout"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = CLIArgumentParser(
        description="Dining co-occurrence network analysis",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s synth --students 30 --weeks 4 -o synthetic/      # Synthetic cohort
  %(prog)s run -c synthetic/pipeline.yaml                   # Full pipeline
  %(prog)s ingest -i data/dining --study-start 2013-01-06   # Single stage
  %(prog)s nullmodel --replicates 20 -o output/             # Rerun one stage
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    stage_arguments = {
        "ingest": [add_ingest_arguments],
        "build": [add_ingest_arguments, add_build_arguments],
        "metrics": [add_ingest_arguments, add_build_arguments, add_metrics_arguments],
        "nullmodel": [add_metrics_arguments, add_nullmodel_arguments],
        "correlate": [add_ingest_arguments, add_correlate_arguments],
        "layout": [add_ingest_arguments, add_correlate_arguments, add_layout_arguments],
        "run": [
            add_ingest_arguments,
            add_build_arguments,
            add_metrics_arguments,
            add_nullmodel_arguments,
            add_correlate_arguments,
            add_layout_arguments,
        ],
    }
    helps = {
        "ingest": "Parse check-in logs and partition them into weeks",
        "build": "Build weekly and cumulative co-occurrence graphs",
        "metrics": "Topology series, dining rates and node centralities",
        "nullmodel": "Clustering baseline from degree-preserving null graphs",
        "correlate": "Spearman correlation of centrality with flourishing scores",
        "layout": "Core-periphery layout and scatter data",
        "run": "Run the full pipeline",
    }
    for command, adders in stage_arguments.items():
        sub = subparsers.add_parser(command, help=helps[command], description=helps[command])
        add_common_arguments(sub)
        for add in adders:
            add(sub)
        if command in ("metrics", "nullmodel", "layout"):
            sub.add_argument("--graph", type=str, help="Work on this one graph file (.json or .edges)")
        if command in ("correlate", "layout"):
            sub.add_argument("--graphs", type=str, help="Directory of graphs written by build")
        if command == "metrics":
            sub.add_argument("--measures", type=name_list, help="Node measures, e.g. dc,cc,bc,clustering")
        if command == "run":
            sub.add_argument("--pdf", action="store_const", const=True, help="Also write report.pdf")

    synth = subparsers.add_parser(
        "synth", help="Generate a synthetic cohort", description="Generate a synthetic cohort"
    )
    synth.add_argument("--spec", type=str, help="Cohort spec YAML")
    synth.add_argument("--out", "--output-dir", "-o", dest="output_dir", type=str, default="synthetic")
    synth.add_argument("--students", type=int, dest="student_count")
    synth.add_argument("--locations", type=int, dest="location_count")
    synth.add_argument("--weeks", type=int)
    synth.add_argument("--core-fraction", type=float)
    synth.add_argument("--p-core", type=float)
    synth.add_argument("--p-peri", type=float)
    synth.add_argument("--meals-per-week", type=float, dest="meals_per_student_per_week")
    synth.add_argument("--trait-slope", type=float)
    synth.add_argument("--noise", type=float, dest="trait_noise_sd")
    synth.add_argument("--trait-window", type=int_list, help="first,last week driving dF")
    synth.add_argument("--seed", type=int)
    synth.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    return parser


def load_config(args: argparse.Namespace) -> Config:
    """Configuration file plus command-line overrides."""
    logger = logging.getLogger(__name__)
    config_path = Path(args.config)
    if not config_path.exists():
        logger.warning(f"Configuration file not found: {config_path}, using defaults")
        config = Config(None)
    else:
        config = Config(str(config_path))

    for dest, key in CONFIG_OVERRIDES.items():
        config.set(key, getattr(args, dest, None))
    return config


def synth_spec(args: argparse.Namespace) -> CohortSpec:
    spec = CohortSpec.from_yaml(args.spec) if args.spec else CohortSpec()
    fields = {f.name for f in dataclasses.fields(CohortSpec)}
    overrides: Dict[str, Any] = {
        k: v for k, v in vars(args).items() if k in fields and v is not None
    }
    if "trait_window" in overrides:
        window = overrides["trait_window"]
        if len(window) != 2:
            raise ValueError("--trait-window takes exactly two weeks: first,last")
        overrides["trait_window"] = tuple(window)
    return dataclasses.replace(spec, **overrides)


def pipeline_config_for(spec: CohortSpec, out_dir: Path) -> Dict[str, Any]:
    """Pipeline configuration that analyses a written synthetic cohort."""
    first = spec.trait_window[0] if spec.trait_window else 1
    return {
        "input": {
            "path": str(out_dir / "dining"),
            "format": "per-student",
            "scores": str(out_dir / "scores.csv"),
        },
        "calendar": {
            "study_start": spec.study_start,
            "n_weeks": spec.weeks,
            "excluded_weeks": [],
            "tz_offset": spec.tz_offset,
        },
        "cooccurrence": {"threshold_seconds": spec.threshold_seconds},
        "analysis": {"anchor_week": first},
        "output": {"directory": str(out_dir / "report")},
        "seed": spec.seed,
    }


def run_synth(args: argparse.Namespace) -> int:
    logger = logging.getLogger(__name__)
    spec = synth_spec(args)
    out_dir = Path(args.output_dir)
    logger.info(f"🧪 Generating cohort: {spec.student_count} students, {spec.weeks} weeks")
    cohort = generate_cohort(spec)
    paths = write_cohort(cohort, spec, out_dir)

    config_path = out_dir / "pipeline.yaml"
    with open(config_path, "w") as f:
        yaml.safe_dump(pipeline_config_for(spec, out_dir), f, sort_keys=False)
    for name, path in paths.items():
        logger.info(f"  {name}: {path}")
    logger.info(f"✅ Pipeline config: {config_path}")
    return EXIT_OK


def run_stages(args: argparse.Namespace) -> int:
    logger = logging.getLogger(__name__)
    config = load_config(args)
    pipeline = Pipeline(config)
    logger.info(f"🚀 Starting {args.command}")
    logger.info(f"📤 Output: {pipeline.output_dir}")

    result = pipeline.run(STAGE_COMMANDS[args.command])
    for warning in result.warnings:
        logger.debug(f"warning: {warning}")
    if result.status != EXIT_OK:
        logger.error(f"❌ Stopped in stage {result.failed_stage}; see {result.output_dir / 'FAILED'}")
    elif args.command == "run":
        logger.info("🎉 Processing completed successfully!")
    return result.status


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging(args.verbose)
    logger = logging.getLogger(__name__)

    try:
        if args.command == "synth":
            return run_synth(args)
        return run_stages(args)
    except KeyboardInterrupt:
        logger.info("👋 Processing interrupted by user")
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"💥 Fatal error: {e}")
        if args.verbose:
            import traceback

            traceback.print_exc()
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
