import json
import logging
import os
from pathlib import Path
from typing import Dict, Any, Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

CONFIG_ENV = "INDIVAR_CONFIG"


class ConfigLoader:
    """Load and cache configuration from config.json"""

    _instance = None
    _config = None
    _path = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(ConfigLoader, cls).__new__(cls)
        return cls._instance

    def load(self, config_path: Optional[str] = None) -> Dict[str, Any]:
        """Load configuration from JSON file (cached after the first call)"""
        if self._config is not None and config_path is None:
            return self._config

        if config_path is None:
            load_dotenv()
            config_path = os.environ.get(CONFIG_ENV)
        if config_path is None:
            config_path = Path(__file__).parent / "config.json"
        else:
            config_path = Path(config_path)

        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                ConfigLoader._config = json.load(f)
            ConfigLoader._path = config_path
            logger.debug(f"✓ Configuration loaded from {config_path}")
            return self._config
        except FileNotFoundError:
            logger.error(f"✗ Config file not found: {config_path}")
            raise
        except json.JSONDecodeError as e:
            logger.error(f"✗ Invalid JSON in config file: {e}")
            raise

    def reload(self, config_path: Optional[str] = None) -> Dict[str, Any]:
        """Drop the cache and load again"""
        ConfigLoader._config = None
        return self.load(config_path)

    def get_section(self, name: str) -> Dict[str, Any]:
        """Top-level section, empty dict when absent"""
        if self._config is None:
            self.load()
        return self._config.get(name, {})

    def get_tolerance(self, name: str) -> float:
        return float(self.get_section("tolerances")[name])

    def get_family_rules(self, family: str, kind: str = "variograms") -> Dict[str, Any]:
        """Catalog entry (hosts, parameter restrictions) for a model family"""
        return self.get_section("catalog").get(kind, {}).get(family, {})


def get_config() -> ConfigLoader:
    """Shared loader with the configuration already read"""
    loader = ConfigLoader()
    loader.load()
    return loader
