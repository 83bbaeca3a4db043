"""
Configuration Manager

This module handles loading, merging, validating, and managing configuration
for MVAM experiments.
"""

import copy
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

import yaml
from loguru import logger

from ..data_processing.synthetic_generator import SyntheticSpec
from ..errors import ConfigError
from ..model.mvam_model import ModelConfig
from ..training.trainer import TrainConfig

DEFAULT_CONFIG: Dict[str, Any] = {
    "experiment": {"setting": "full", "seed": 0},
    "model": {
        "d_e": 100,
        "d_c": 200,
        "k": 10,
        "d_ff": 2048,
        "dropout_p": 0.6,
        "use_positional_encoding": True,
        "use_label_attention": True,
        "activation": "tanh",
        "num_label_blocks": 1,
        "norm_kind": "layer",
        "norm_eps": 1e-5,
    },
    "training": {
        "learning_rate": 2e-4,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "batch_size": 16,
        "patience": 10,
        "early_stop_n": 15,
        "max_epochs": 100,
        "progress_bar": True,
    },
    "data": {"min_freq": 1, "max_length": 2500, "top_labels": None, "embeddings": None},
    "synthetic": {
        "vocab_size": 600,
        "num_labels": 30,
        "docs_per_split": {"train": 5000, "val": 500, "test": 500},
        "doc_length": [40, 80],
        "triggers_per_label": 2,
        "base_rates": 0.1,
        "cooccurrence": [],
        "noise_rate": 0.05,
        "weak_labels": {},
        "seed": 7,
    },
    "evaluation": {"threshold": 0.5, "n_list": [5, 8, 15]},
    "logging": {
        "level": "INFO",
        "format": "{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{function}:{line} - {message}",
        "file": None,
    },
    "output": {"dir": "runs"},
}

# Settings presets sit between the defaults and the config file.
SETTINGS: Dict[str, Dict[str, Any]] = {
    "full": {"model": {"dropout_p": 0.6}, "training": {"early_stop_n": 15}, "data": {"top_labels": None}},
    "top50": {"model": {"dropout_p": 0.8}, "training": {"early_stop_n": 5}, "data": {"top_labels": 50}},
}

LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")


def deep_merge(base: Mapping[str, Any], overlay: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursively merge `overlay` onto a copy of `base`; overlay wins on conflicts."""
    merged = copy.deepcopy(dict(base))
    for key, value in overlay.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(item: str) -> Dict[str, Any]:
    """
    Turn `a.b.c=value` into a nested dict; the value is parsed as YAML.

    Raises:
        ConfigError: If the item has no `=` or an empty key
    """
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key or any(not part for part in key.split(".")):
        raise ConfigError(f"override must look like key=value, got {item!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse override value {raw!r}: {e}") from None
    nested: Dict[str, Any] = {}
    current = nested
    parts = key.split(".")
    for part in parts[:-1]:
        current[part] = {}
        current = current[part]
    current[parts[-1]] = value
    return nested


class ConfigManager:
    """
    Manages configuration loading, validation, and access for MVAM experiments.
    """

    def __init__(self, config_path: Optional[str] = None, overrides: Iterable[str] = ()):
        """
        Initialize the configuration manager.

        Args:
            config_path: Path to a YAML configuration file. If None, only defaults are used.
            overrides: `key=value` items applied last
        """
        self.config_path = config_path
        self.overrides = list(overrides)
        self._config: Optional[Dict[str, Any]] = None
        self._load_config()

    def _read_file(self) -> Dict[str, Any]:
        if self.config_path is None:
            return {}
        config_file = Path(self.config_path)
        if not config_file.exists():
            raise ConfigError(f"Configuration file not found: {self.config_path}")
        try:
            with open(config_file, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML in {self.config_path}: {e}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{self.config_path} must contain a mapping at the top level")
        return loaded

    def _load_config(self) -> None:
        """Merge defaults, the settings preset, the file, and overrides."""
        try:
            from_file = self._read_file()
            overlay: Dict[str, Any] = {}
            for item in self.overrides:
                overlay = deep_merge(overlay, parse_override(item))

            setting = (
                overlay.get("experiment", {}).get("setting")
                or from_file.get("experiment", {}).get("setting")
                or DEFAULT_CONFIG["experiment"]["setting"]
            )
            if setting not in SETTINGS:
                raise ConfigError(f"Unknown experiment.setting {setting!r}. Expected one of {sorted(SETTINGS)}")

            config = deep_merge(DEFAULT_CONFIG, SETTINGS[setting])
            config = deep_merge(config, from_file)
            self._config = deep_merge(config, overlay)

            if self.config_path:
                logger.debug(f"Configuration loaded from {self.config_path}")

        except Exception as e:
            logger.error(f"Failed to load configuration: {str(e)}")
            raise

    def get_config(self) -> Dict[str, Any]:
        """
        Get the complete configuration dictionary.

        Returns:
            Configuration dictionary
        """
        if self._config is None:
            self._load_config()
        return self._config

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value by key (supports dot notation).

        Args:
            key: Configuration key (e.g., 'training.learning_rate')
            default: Default value if key not found

        Returns:
            Configuration value
        """
        value = self.get_config()
        for k in key.split("."):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any) -> None:
        """
        Set a configuration value by key (supports dot notation).

        Args:
            key: Configuration key (e.g., 'experiment.seed')
            value: Value to set
        """
        current = self.get_config()
        keys = key.split(".")
        for k in keys[:-1]:
            current = current.setdefault(k, {})
        current[keys[-1]] = value

    def model_config(self, num_labels: int, vocab_size: int) -> ModelConfig:
        """Build the model configuration for a corpus of the given size."""
        return ModelConfig.from_dict({**self.get("model", {}), "num_labels": num_labels, "vocab_size": vocab_size})

    def train_config(self) -> TrainConfig:
        """Build the training configuration; the seed comes from `experiment.seed`."""
        return TrainConfig.from_dict({**self.get("training", {}), "seed": int(self.get("experiment.seed", 0))})

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec.from_dict(self.get("synthetic", {}))

    def validate_config(self) -> bool:
        """
        Validate the configuration for known sections and consistent values.

        Returns:
            True if configuration is valid

        Raises:
            ConfigError: On the first problem found
        """
        config = self.get_config()
        unknown = set(config) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"Unknown configuration section(s): {', '.join(sorted(unknown))}")

        for section in ("model", "training", "data", "evaluation"):
            extra = set(config.get(section) or {}) - set(DEFAULT_CONFIG[section])
            if extra:
                raise ConfigError(f"Unknown {section} field(s): {', '.join(sorted(extra))}")

        # Placeholder sizes; the real ones come from the corpus.
        self.model_config(num_labels=1, vocab_size=2)
        train = self.train_config()
        self.synthetic_spec()

        threshold = self.get("evaluation.threshold")
        if not 0.0 <= float(threshold) <= 1.0:
            raise ConfigError(f"evaluation.threshold must lie in [0, 1], got {threshold}")
        n_list = self.get("evaluation.n_list", [])
        if not n_list or any(int(n) < 1 for n in n_list):
            raise ConfigError(f"evaluation.n_list must hold positive integers, got {n_list}")
        top_labels = self.get("data.top_labels")
        if top_labels is not None and int(top_labels) < 1:
            raise ConfigError(f"data.top_labels must be positive, got {top_labels}")
        if top_labels is not None and train.early_stop_n > int(top_labels):
            raise ConfigError("training.early_stop_n exceeds data.top_labels")
        if str(self.get("logging.level", "INFO")).upper() not in LOG_LEVELS:
            raise ConfigError(f"Unknown logging.level {self.get('logging.level')!r}")

        logger.debug("Configuration validation completed")
        return True

    def setup_logging(self) -> None:
        """Route loguru output to stderr and, when configured, a rotating log file."""
        level = str(self.get("logging.level", "INFO")).upper()
        fmt = self.get("logging.format", DEFAULT_CONFIG["logging"]["format"])
        logger.remove()
        logger.add(sys.stderr, level=level, format=fmt)
        log_file = self.get("logging.file")
        if log_file:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)
            logger.add(log_file, level=level, format=fmt, rotation="10 MB")

    def save_config(self, output_path: Optional[str] = None) -> Path:
        """
        Save the effective configuration to a file.

        Args:
            output_path: Path to save the configuration. If None, uses the original path.
        """
        try:
            save_path = Path(output_path or self.config_path or "config.yaml")
            save_path.parent.mkdir(parents=True, exist_ok=True)
            with open(save_path, "w", encoding="utf-8") as f:
                yaml.safe_dump(self._config, f, default_flow_style=False, indent=2, sort_keys=False)

            logger.info(f"Configuration saved to {save_path}")
            return save_path

        except Exception as e:
            logger.error(f"Failed to save configuration: {str(e)}")
            raise

    def reload_config(self) -> None:
        """Reload configuration from the file and overrides."""
        self._config = None
        self._load_config()
