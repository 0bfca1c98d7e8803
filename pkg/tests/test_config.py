"""
Unit tests for configuration management.
"""

import unittest
import tempfile
import json
import os
import sys

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from utils.config import Config, ConfigError, load_experiment, validate_experiment


class TestConfig(unittest.TestCase):
    """Test cases for Config class."""

    def test_get_default_config(self):
        """Test loading default configuration."""
        config = Config()

        self.assertIsNotNone(config.get('solver.tau'))
        self.assertIsNotNone(config.get('inner.grad_tol'))
        self.assertIsNotNone(config.get('spectral.M'))

    def test_get_with_default(self):
        """Test get method with default value."""
        config = Config()

        value = config.get('nonexistent.key', 'default_value')
        self.assertEqual(value, 'default_value')

    def test_set_value(self):
        """Test setting configuration value."""
        config = Config()

        config.set('test.value', 123)
        self.assertEqual(config.get('test.value'), 123)

    def test_nested_get(self):
        """Test nested key access."""
        config = Config()

        tau = config.get('solver.tau')
        self.assertIsInstance(tau, (int, float))
        self.assertGreater(tau, 0)

    def test_missing_file_falls_back_to_defaults(self):
        """Test a missing YAML file yields the built-in defaults."""
        config = Config('/nonexistent/solver_params.yaml')

        self.assertEqual(config.get('solver.N'), 128)
        self.assertEqual(config.get('inner.method'), 'newton')

    def test_save_and_reload(self):
        """Test saving a modified config and reading it back."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'params.yaml')
            config = Config(path)
            config.set('solver.nu', 0.25)
            config.save()

            reloaded = Config(path)
            self.assertEqual(reloaded.get('solver.nu'), 0.25)
            self.assertEqual(reloaded.get('solver.tau'), config.get('solver.tau'))


class TestExperimentSchema(unittest.TestCase):
    """Test cases for experiment file validation."""

    def setUp(self):
        self.defaults = Config('/nonexistent/solver_params.yaml')

    def test_defaults_are_merged(self):
        """Test unspecified keys take the YAML defaults."""
        values = validate_experiment({'version': 1, 'command': 'evolve', 'nu': 0.3}, self.defaults)

        self.assertEqual(values['nu'], 0.3)
        self.assertEqual(values['tau'], 0.02)
        self.assertEqual(values['inner_method'], 'newton')
        self.assertIsNone(values['source'])

    def test_wrong_version_rejected(self):
        """Test the schema version is enforced."""
        with self.assertRaises(ConfigError) as ctx:
            validate_experiment({'version': 2, 'command': 'evolve'}, self.defaults)
        self.assertEqual(ctx.exception.field, 'version')

    def test_unknown_command_rejected(self):
        """Test unknown commands are rejected."""
        with self.assertRaises(ConfigError) as ctx:
            validate_experiment({'version': 1, 'command': 'fly'}, self.defaults)
        self.assertEqual(ctx.exception.field, 'command')

    def test_unknown_key_rejected(self):
        """Test unknown keys are named in the error."""
        with self.assertRaises(ConfigError) as ctx:
            validate_experiment({'version': 1, 'command': 'evolve', 'altitude': 10}, self.defaults)
        self.assertEqual(ctx.exception.field, 'altitude')

    def test_wrong_type_rejected(self):
        """Test type mismatches, including booleans for numbers."""
        with self.assertRaises(ConfigError) as ctx:
            validate_experiment({'version': 1, 'command': 'evolve', 'N': 'many'}, self.defaults)
        self.assertEqual(ctx.exception.field, 'N')

        with self.assertRaises(ConfigError):
            validate_experiment({'version': 1, 'command': 'evolve', 'tau': True}, self.defaults)

    def test_range_checks(self):
        """Test numeric preconditions."""
        cases = [
            ('nu', -0.1),
            ('tau', 0.0),
            ('N', 1),
            ('coeff', 0.25),
            ('M', 100),
            ('flux_sign', 0),
        ]
        for key, value in cases:
            with self.subTest(key=key):
                with self.assertRaises(ConfigError) as ctx:
                    validate_experiment({'version': 1, 'command': 'evolve', key: value}, self.defaults)
                self.assertEqual(ctx.exception.field, key)

    def test_t_end_below_tau_rejected(self):
        """Test the horizon must cover one step."""
        with self.assertRaises(ConfigError) as ctx:
            validate_experiment(
                {'version': 1, 'command': 'evolve', 'tau': 0.1, 't_end': 0.05}, self.defaults
            )
        self.assertEqual(ctx.exception.field, 't_end')

    def test_json_syntax_error_reports_line(self):
        """Test syntax errors carry the line number."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'bad.json')
            with open(path, 'w') as f:
                f.write('{\n  "version": 1,\n  "command": "evolve"\n  "nu": 0.1\n}\n')

            with self.assertRaises(ConfigError) as ctx:
                load_experiment(path, self.defaults)
            self.assertEqual(ctx.exception.line, 4)

    def test_load_valid_file(self):
        """Test loading a valid experiment file."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'ok.json')
            with open(path, 'w') as f:
                json.dump({'version': 1, 'command': 'hilbert', 'M': 64}, f)

            values = load_experiment(path, self.defaults)
            self.assertEqual(values['command'], 'hilbert')
            self.assertEqual(values['M'], 64)


if __name__ == '__main__':
    unittest.main()
