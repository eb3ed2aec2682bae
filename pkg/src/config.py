"""Configuration handling for the dining co-occurrence pipeline."""

import copy
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .ingest import StudyCalendar
from .nullmodel import NullModelConfig


class Config:
    """Handles pipeline configuration from YAML files."""

    def __init__(self, config_path: Optional[str] = "config.yaml"):
        """
        Initialize configuration.

        Args:
            config_path: Path to the YAML configuration file. ``None`` or a
                missing file gives the built-in defaults.
        """
        self.config_path = Path(config_path) if config_path else None
        self._config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from YAML file."""
        if self.config_path is None or not self.config_path.exists():
            return self._get_default_config()

        try:
            with open(self.config_path, "r") as f:
                config = yaml.safe_load(f) or {}

            if not isinstance(config, dict):
                raise ValueError("top level must be a mapping")

            # Merge with defaults to ensure all required keys exist
            default_config = self._get_default_config()
            return self._merge_configs(default_config, config)

        except Exception as e:
            raise ValueError(
                f"Failed to load configuration from {self.config_path}: {e}"
            )

    def _get_default_config(self) -> Dict[str, Any]:
        """Return default configuration."""
        return {
            "input": {
                "path": "data/dining",
                "format": "per-student",
                "scores": None,
                "roster": None,
                "graph": None,
                "graphs": None,
            },
            "calendar": {
                # Sunday of the first study week, local midnight
                "study_start": "2013-01-06",
                "n_weeks": 21,
                "excluded_weeks": [11],
                "tz_offset": -5 * 3600,
            },
            "cooccurrence": {
                "threshold_seconds": 1200,
                "write_witnesses": False,
                "weeks": "all",
            },
            "null_model": {
                "replicates": 100,
                "swap_rounds_multiplier": 10,
                "max_attempts_per_round": 100,
                "count_mode": "accepted",
            },
            "analysis": {
                "anchor_week": 11,
                "kinds": ["dc", "cc", "bc"],
                "measures": ["dc", "cc", "bc", "clustering"],
                "missing_policy": "zero",
                "pvalue_method": "auto",
                "clustering_convention": "zeros",
                "layout_centrality": "dc",
            },
            "report": {
                "pdf": False,
                "decimal_places": 3,
                "title": "Dining Co-occurrence Network Report",
            },
            "output": {"directory": "output"},
            "seed": 20130106,
        }

    def _merge_configs(
        self, default: Dict[str, Any], user: Dict[str, Any]
    ) -> Dict[str, Any]:
        """Recursively merge user config with default config."""
        for key, value in user.items():
            if (
                key in default
                and isinstance(default[key], dict)
                and isinstance(value, dict)
            ):
                default[key] = self._merge_configs(default[key], value)
            else:
                default[key] = value
        return default

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value using dot notation.

        Args:
            key: Configuration key (e.g., 'calendar.tz_offset')
            default: Default value if key not found

        Returns:
            Configuration value
        """
        keys = key.split(".")
        value = self._config

        try:
            for k in keys:
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any) -> None:
        """Override a configuration value using dot notation; ``None`` is ignored."""
        if value is None:
            return
        keys = key.split(".")
        node = self._config
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value

    def as_dict(self) -> Dict[str, Any]:
        """Deep copy of the effective configuration (recorded in the run manifest)."""
        return copy.deepcopy(self._config)

    def get_calendar(self) -> StudyCalendar:
        """Build the study calendar from the ``calendar`` section."""
        section = self._config.get("calendar", {})
        return StudyCalendar.from_values(
            study_start=section.get("study_start"),
            n_weeks=section.get("n_weeks", 21),
            excluded_weeks=section.get("excluded_weeks") or [],
            tz_offset=section.get("tz_offset", 0),
        )

    def get_null_model_config(self) -> NullModelConfig:
        """Build the null-model configuration, seeded from the master seed."""
        section = self._config.get("null_model", {})
        return NullModelConfig(
            swap_rounds_multiplier=int(section.get("swap_rounds_multiplier", 10)),
            replicate_count=int(section.get("replicates", 100)),
            master_seed=int(self.get("seed", 0)),
            max_attempts_per_round=int(section.get("max_attempts_per_round", 100)),
            count_mode=section.get("count_mode", "accepted"),
        )

    def get_threshold(self) -> int:
        """Co-occurrence time threshold T in seconds."""
        return int(self.get("cooccurrence.threshold_seconds", 1200))

    def get_anchor_week(self) -> int:
        """First week label of the cumulative networks."""
        return int(self.get("analysis.anchor_week", 11))

    def get_output_dir(self) -> Path:
        """Directory receiving the report bundle."""
        return Path(self.get("output.directory", "output"))
