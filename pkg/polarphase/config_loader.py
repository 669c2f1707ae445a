"""
Load and manage the JSON settings that drive recovery and sweeps.
"""

import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Return a copy of base with override merged in, recursing into dicts."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ConfigLoader:
    """Load settings.json once and apply optional user overrides."""

    def __init__(self, config_dir: Union[str, Path, None] = None):
        self.config_dir = Path(config_dir) if config_dir else DEFAULT_CONFIG_DIR
        self._settings = None

    def _read_json(self, path: Path) -> Dict[str, Any]:
        try:
            with open(path, "r") as f:
                return json.load(f)
        except FileNotFoundError:
            logger.error(f"Config file not found: {path}")
            raise
        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in config {path}: {e}")
            raise

    def load_settings(self, override_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
        """Load settings from JSON, deep-merging an override file if given."""
        if self._settings is None:
            self._settings = self._read_json(self.config_dir / "settings.json")
        if override_path is None:
            return copy.deepcopy(self._settings)
        override = self._read_json(Path(override_path))
        logger.debug("Applied config override", extra={"override_path": str(override_path)})
        return deep_merge(self._settings, override)
