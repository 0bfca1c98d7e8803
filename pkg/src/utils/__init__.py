"""
Utilities package for circleflow.
"""

from .config import Config, ConfigError, get_config, load_experiment
from .logger import FlowLogger, SeriesLogger, configure_logger, get_logger

__all__ = [
    'Config',
    'ConfigError',
    'get_config',
    'load_experiment',
    'FlowLogger',
    'SeriesLogger',
    'configure_logger',
    'get_logger'
]
