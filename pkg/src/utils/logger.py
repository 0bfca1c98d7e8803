"""
Logging utilities for the circleflow solvers.
Provides colored console logging, optional per-run log files and a CSV
series writer for flow diagnostics.
"""

import os
import sys
import logging
from datetime import datetime
from typing import Dict, List, Optional

import colorlog
import pandas as pd


SERIES_COLUMNS = [
    't',
    'entropy',
    'interaction',
    'total_energy',
    'dist_to_minimizer',
    'step_cost',
    'inner_iterations',
]


class FlowLogger:
    """Logger for solver runs with colored console and optional file output."""

    def __init__(
        self,
        name: str = 'circleflow',
        log_dir: Optional[str] = None,
        log_level: str = 'INFO',
        console_output: bool = True,
        console_level: Optional[str] = None
    ):
        """
        Initialize flow logger.

        Args:
            name: Logger name
            log_dir: Directory for log files (None disables the file handler)
            log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
            console_output: Enable console output
            console_level: Separate threshold for the console handler
        """
        self.name = name
        self.log_dir = log_dir
        self.log_level = getattr(logging, log_level.upper(), logging.INFO)
        self.console_level = getattr(
            logging, (console_level or log_level).upper(), self.log_level
        )
        self.console_output = console_output
        self.log_file: Optional[str] = None

        if log_dir is not None:
            os.makedirs(log_dir, exist_ok=True)

        self.logger = self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        """
        Set up logger with console and file handlers.

        Returns:
            Configured logger instance
        """
        logger = logging.getLogger(self.name)
        logger.setLevel(min(self.log_level, self.console_level))
        logger.propagate = False

        for handler in list(logger.handlers):
            handler.close()
        logger.handlers.clear()

        if self.log_dir is not None:
            file_formatter = logging.Formatter(
                '%(asctime)s | %(levelname)-8s | %(funcName)s:%(lineno)d | %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            )
            timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
            self.log_file = os.path.join(self.log_dir, f'{self.name}_{timestamp}.log')
            file_handler = logging.FileHandler(self.log_file)
            file_handler.setLevel(self.log_level)
            file_handler.setFormatter(file_formatter)
            logger.addHandler(file_handler)

        if self.console_output:
            console_formatter = colorlog.ColoredFormatter(
                '%(log_color)s%(asctime)s | %(levelname)-8s | %(message)s',
                datefmt='%H:%M:%S',
                log_colors={
                    'DEBUG': 'cyan',
                    'INFO': 'green',
                    'WARNING': 'yellow',
                    'ERROR': 'red',
                    'CRITICAL': 'red,bg_white',
                }
            )
            console_handler = colorlog.StreamHandler(sys.stderr)
            console_handler.setLevel(self.console_level)
            console_handler.setFormatter(console_formatter)
            logger.addHandler(console_handler)

        if self.log_file:
            logger.debug(f"Logger initialized. Log file: {self.log_file}")

        return logger

    def debug(self, message: str) -> None:
        """Log debug message."""
        self.logger.debug(message)

    def info(self, message: str) -> None:
        """Log info message."""
        self.logger.info(message)

    def warning(self, message: str) -> None:
        """Log warning message."""
        self.logger.warning(message)

    def error(self, message: str) -> None:
        """Log error message."""
        self.logger.error(message)

    def critical(self, message: str) -> None:
        """Log critical message."""
        self.logger.critical(message)

    def log_step(self, data: dict, level: str = 'DEBUG') -> None:
        """
        Log one solver step in a structured format.

        Args:
            data: Dictionary of step diagnostics
            level: Log level for the record
        """
        message = " | ".join(f"{key}: {_fmt(value)}" for key, value in data.items())
        log_func = getattr(self.logger, level.lower(), self.logger.debug)
        log_func(f"STEP | {message}")

    def log_experiment_event(self, event: str, details: Optional[str] = None) -> None:
        """
        Log experiment lifecycle events.

        Args:
            event: Event name
            details: Additional details
        """
        if details:
            self.logger.info(f"EXPERIMENT | {event} | {details}")
        else:
            self.logger.info(f"EXPERIMENT | {event}")

    def log_check_event(self, event: str, level: str = 'WARNING') -> None:
        """
        Log the outcome of an invariant or acceptance check.

        Args:
            event: Check description
            level: Log level (INFO, WARNING, ERROR, CRITICAL)
        """
        log_func = getattr(self.logger, level.lower(), self.logger.warning)
        log_func(f"CHECK | {event}")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class SeriesLogger:
    """Collects per-step flow diagnostics and writes them as CSV."""

    def __init__(self, columns: Optional[List[str]] = None):
        """
        Initialize series logger.

        Args:
            columns: Column order of the CSV file
        """
        self.columns = list(columns or SERIES_COLUMNS)
        self.rows: List[Dict] = []

    def log(self, row: dict) -> None:
        """
        Append one row of diagnostics.

        Args:
            row: Dictionary keyed by column name
        """
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise KeyError(f"series row missing columns: {', '.join(missing)}")
        self.rows.append({c: row[c] for c in self.columns})

    def to_frame(self) -> pd.DataFrame:
        """Return the collected rows as a DataFrame."""
        return pd.DataFrame(self.rows, columns=self.columns)

    def write(self, path: str) -> str:
        """
        Write the series to a CSV file with 17 significant digits.

        Args:
            path: Output CSV path

        Returns:
            The path written
        """
        frame = self.to_frame()
        if 'inner_iterations' in frame:
            frame['inner_iterations'] = frame['inner_iterations'].astype(int)
        frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
        return path


# Singleton instance for easy access
_logger_instance: Optional[FlowLogger] = None


def get_logger(
    name: str = 'circleflow',
    log_dir: Optional[str] = None,
    log_level: str = 'INFO'
) -> FlowLogger:
    """
    Get or create singleton FlowLogger instance.

    Args:
        name: Logger name
        log_dir: Directory for log files
        log_level: Logging level

    Returns:
        FlowLogger instance
    """
    global _logger_instance
    if _logger_instance is None:
        _logger_instance = FlowLogger(name, log_dir, log_level)
    return _logger_instance


def configure_logger(
    log_dir: Optional[str] = None,
    log_level: str = 'INFO',
    quiet: bool = False
) -> FlowLogger:
    """
    Replace the singleton logger, e.g. to attach a run directory.

    Args:
        log_dir: Directory for the log file
        log_level: File logging level
        quiet: Raise the console threshold to WARNING

    Returns:
        The new FlowLogger instance
    """
    global _logger_instance
    _logger_instance = FlowLogger(
        'circleflow',
        log_dir,
        log_level,
        console_level='WARNING' if quiet else log_level
    )
    return _logger_instance
