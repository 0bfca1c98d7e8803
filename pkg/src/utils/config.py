"""
Configuration management for the circleflow solvers.
Loads solver defaults from YAML and validates flat JSON experiment files.
"""

import os
import copy
import json
from typing import Any, Dict, Optional

import yaml


EXPERIMENT_SCHEMA_VERSION = 1

COMMANDS = (
    'evolve', 'distance', 'energy', 'geodesic', 'hilbert', 'sweep-nu',
    'error-bound', 'spectral', 'cross-validate', 'validate',
)

# key -> (accepted types, dot path of the YAML default or None)
EXPERIMENT_KEYS: Dict[str, tuple] = {
    'version': ((int,), None),
    'command': ((str,), None),
    'nu': ((int, float), 'solver.nu'),
    'tau': ((int, float), 'solver.tau'),
    't_end': ((int, float), 'solver.t_end'),
    'N': ((int,), 'solver.N'),
    'coeff': ((int, float), 'solver.coeff'),
    'seed': ((int,), 'solver.seed'),
    'restarts': ((int,), 'solver.restarts'),
    'max_halvings': ((int,), 'solver.max_halvings'),
    'inner_method': ((str,), 'inner.method'),
    'max_iter': ((int,), 'inner.max_iter'),
    'grad_tol': ((int, float), 'inner.grad_tol'),
    'armijo_c': ((int, float), 'inner.armijo_c'),
    'armijo_shrink': ((int, float), 'inner.armijo_shrink'),
    'step_init': ((int, float, type(None)), 'inner.step_init'),
    'initial': ((str,), 'initial.kind'),
    'a1': ((int, float), 'initial.a1'),
    'eps': ((int, float), 'initial.eps'),
    'level': ((int,), 'initial.level'),
    'path': ((str, type(None)), 'initial.path'),
    'second_initial': ((str, type(None)), None),
    'second_a1': ((int, float), None),
    'output_dir': ((str,), 'output.output_dir'),
    'snapshot_every': ((int,), 'output.snapshot_every'),
    'M': ((int,), 'spectral.M'),
    'dt': ((int, float, type(None)), 'spectral.dt'),
    'sample_dt': ((int, float), 'spectral.sample_dt'),
    'flux_sign': ((int,), 'spectral.flux_sign'),
    'scenario': ((str,), None),
    'nus': ((list,), None),
    'taus': ((list,), None),
    'fine_factor': ((int,), 'diagnostics.fine_factor'),
    'source': ((str,), None),
    'target': ((str,), None),
    't_values': ((list,), None),
    'modes': ((list,), None),
    'scale': ((str,), None),
}


class ConfigError(Exception):
    """Raised when a configuration file or value is invalid."""

    def __init__(self, field: str, reason: str, line: Optional[int] = None):
        self.field = field
        self.reason = reason
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field}: {reason}")


class Config:
    """Configuration manager for solver parameters."""

    def __init__(self, config_path: str = None):
        """
        Initialize configuration manager.

        Args:
            config_path: Path to YAML configuration file
        """
        if config_path is None:
            base_dir = os.path.dirname(os.path.dirname(os.path.dirname(__file__)))
            config_path = os.path.join(base_dir, 'config', 'solver_params.yaml')

        self.config_path = config_path
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """
        Load configuration from YAML file.

        Returns:
            Dictionary containing configuration parameters
        """
        try:
            with open(self.config_path, 'r') as f:
                loaded = yaml.safe_load(f) or {}
        except FileNotFoundError:
            return self._get_default_config()
        except yaml.YAMLError as e:
            raise ConfigError(self.config_path, f"YAML parse error: {e}")

        merged = self._get_default_config()
        _deep_update(merged, loaded)
        return merged

    def _get_default_config(self) -> Dict[str, Any]:
        """
        Get default configuration if the YAML file is missing.

        Returns:
            Dictionary with default parameters
        """
        return {
            'solver': {
                'nu': 0.1,
                'tau': 0.02,
                't_end': 5.0,
                'N': 128,
                'coeff': 0.5,
                'seed': 0,
                'restarts': 0,
                'max_halvings': 3
            },
            'inner': {
                'method': 'newton',
                'max_iter': 500,
                'grad_tol': 1e-9,
                'armijo_c': 1e-4,
                'armijo_shrink': 0.5,
                'step_init': None
            },
            'initial': {
                'kind': 'uniform',
                'a1': 0.1,
                'eps': 1e-3,
                'level': 4,
                'path': None
            },
            'spectral': {
                'M': 256,
                'dt': None,
                'sample_dt': 0.05,
                'flux_sign': 1
            },
            'diagnostics': {
                'fine_factor': 8,
                'contraction_slack': 1e-4,
                'sweep_slack': 0.2
            },
            'output': {
                'output_dir': 'runs/default',
                'snapshot_every': 1,
                'log_level': 'INFO'
            }
        }

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        Get configuration value by dot-notation key path.

        Args:
            key_path: Dot-separated path to config value (e.g., 'solver.tau')
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        value = self.config
        for key in key_path.split('.'):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def set(self, key_path: str, value: Any) -> None:
        """
        Set configuration value by dot-notation key path.

        Args:
            key_path: Dot-separated path to config value
            value: New value to set
        """
        keys = key_path.split('.')
        config = self.config
        for key in keys[:-1]:
            config = config.setdefault(key, {})
        config[keys[-1]] = value

    def save(self, output_path: str = None) -> None:
        """
        Save current configuration to YAML file.

        Args:
            output_path: Path to save config (defaults to original path)
        """
        with open(output_path or self.config_path, 'w') as f:
            yaml.safe_dump(self.config, f, default_flow_style=False, sort_keys=False)

    def reload(self) -> None:
        """Reload configuration from file."""
        self.config = self._load_config()

    def __repr__(self) -> str:
        return f"Config(path='{self.config_path}')"


def _deep_update(target: dict, source: dict) -> None:
    for key, value in source.items():
        if isinstance(value, dict) and isinstance(target.get(key), dict):
            _deep_update(target[key], value)
        else:
            target[key] = value


def load_experiment(path: str, defaults: Optional[Config] = None) -> Dict[str, Any]:
    """
    Load a flat JSON experiment file and merge it over the YAML defaults.

    Args:
        path: Path to the experiment JSON file
        defaults: Config supplying default values (singleton if omitted)

    Returns:
        Flat dictionary with every known key resolved

    Raises:
        ConfigError: On syntax errors, unknown keys or invalid values
    """
    try:
        with open(path, 'r') as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError('config', f"file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError('config', e.msg, line=e.lineno)

    return validate_experiment(raw, defaults)


def validate_experiment(raw: Any, defaults: Optional[Config] = None) -> Dict[str, Any]:
    """
    Validate an experiment dictionary against the version 1 schema.

    Args:
        raw: Parsed JSON object
        defaults: Config supplying default values

    Returns:
        Flat dictionary with defaults filled in
    """
    if not isinstance(raw, dict):
        raise ConfigError('config', 'top level must be a JSON object')

    if raw.get('version') != EXPERIMENT_SCHEMA_VERSION:
        raise ConfigError('version', f"expected {EXPERIMENT_SCHEMA_VERSION}, got {raw.get('version')!r}")

    command = raw.get('command')
    if command not in COMMANDS:
        raise ConfigError('command', f"must be one of {', '.join(COMMANDS)}")

    for key, value in raw.items():
        if key not in EXPERIMENT_KEYS:
            raise ConfigError(key, 'unknown key')
        types = EXPERIMENT_KEYS[key][0]
        if isinstance(value, bool) or not isinstance(value, types):
            names = '/'.join(t.__name__ for t in types)
            raise ConfigError(key, f"expected {names}, got {type(value).__name__}")

    defaults = defaults or get_config()
    resolved: Dict[str, Any] = {}
    for key, (_, dot_path) in EXPERIMENT_KEYS.items():
        if key in raw:
            resolved[key] = copy.deepcopy(raw[key])
        elif dot_path is not None:
            resolved[key] = defaults.get(dot_path)
        else:
            resolved[key] = None

    _check_ranges(resolved)
    return resolved


def _check_ranges(values: Dict[str, Any]) -> None:
    if values['nu'] is not None and values['nu'] < 0:
        raise ConfigError('nu', 'must be >= 0')
    if values['tau'] is not None and values['tau'] <= 0:
        raise ConfigError('tau', 'must be > 0')
    if values['t_end'] is not None and values['t_end'] < values['tau']:
        raise ConfigError('t_end', 'must be >= tau')
    if values['N'] is not None and values['N'] < 2:
        raise ConfigError('N', 'must be >= 2')
    if values['coeff'] not in (0.5, 1, 1.0):
        raise ConfigError('coeff', 'must be 0.5 or 1')
    if values['grad_tol'] is not None and values['grad_tol'] <= 0:
        raise ConfigError('grad_tol', 'must be > 0')
    if values['snapshot_every'] is not None and values['snapshot_every'] < 1:
        raise ConfigError('snapshot_every', 'must be >= 1')
    if values['inner_method'] not in ('newton', 'gradient'):
        raise ConfigError('inner_method', "must be 'newton' or 'gradient'")
    if values['M'] is not None and (values['M'] < 4 or values['M'] & (values['M'] - 1)):
        raise ConfigError('M', 'must be a power of two >= 4')
    if values['flux_sign'] not in (1, -1):
        raise ConfigError('flux_sign', 'must be 1 or -1')
    for key in ('nus', 'taus', 't_values', 'modes'):
        seq = values.get(key)
        if seq is not None and not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in seq
        ):
            raise ConfigError(key, 'must be a list of numbers')
    if values['scale'] not in (None, 'quick', 'full'):
        raise ConfigError('scale', "must be 'quick' or 'full'")


# Singleton instance for easy access
_config_instance: Optional[Config] = None


def get_config(config_path: str = None) -> Config:
    """
    Get or create singleton Config instance.

    Args:
        config_path: Optional path to config file

    Returns:
        Config instance
    """
    global _config_instance
    if _config_instance is None:
        _config_instance = Config(config_path)
    return _config_instance
