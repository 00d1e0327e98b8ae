"""Multiuser scheduling and hybrid beamforming simulator for mmWave MIMO-OFDM downlinks."""

from .config import ConfigError, SimConfig
from .protocol import EpisodeResult, run_episode

__version__ = "0.1.0"

__all__ = ["ConfigError", "SimConfig", "EpisodeResult", "run_episode", "__version__"]
