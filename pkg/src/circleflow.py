"""
Command-line experiment runner for circleflow.

Reads a flat JSON experiment file, runs the named command and writes
series.csv, numbered snapshots and report.json into the output directory.
"""

import os
import sys
import json
import argparse
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from measure import CellMeasure, atoms_of, cantor_measure, grid_nodes, initial_data, to_density
from circot import dper2, dper2_oracle, dper2_quantile, geodesic
from energy import free_energy, hilbert_transform, hilbert_transform_pv
from jko import (
    NonConvergenceError, SolverConfig, contraction_check, energy_gap_check,
    error_bound_check, evolve, inviscid_sweep
)
from spectral import blowup_scenario, cosine_grid, cross_validate, spectral_evolve
from validation import AcceptanceSuite
from utils.config import ConfigError, get_config, load_experiment
from utils.logger import configure_logger, get_logger
from utils.snapshots import SnapshotFormatError, read_measure, write_grid, write_trajectory


__version__ = '1.0.0'

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3

CROSS_VALIDATION_TOL = 5e-2


@dataclass
class ExperimentConfig:
    """Validated experiment: command, solver parameters and output settings."""

    command: str
    solver: SolverConfig
    initial: Dict[str, Any]
    output_dir: str
    snapshot_every: int
    values: Dict[str, Any] = field(default_factory=dict)
    base_dir: str = '.'

    @classmethod
    def from_dict(cls, values: Dict[str, Any], base_dir: str = '.') -> 'ExperimentConfig':
        """
        Build from the flat dictionary returned by load_experiment.

        Raises:
            ConfigError: If a value violates a solver precondition
        """
        try:
            solver = SolverConfig.from_values(values)
        except ValueError as e:
            raise ConfigError('solver', str(e))
        initial = {
            'kind': values['initial'],
            'a1': values['a1'],
            'eps': values['eps'],
            'level': values['level'],
            'path': values['path'],
        }
        return cls(
            command=values['command'],
            solver=solver,
            initial=initial,
            output_dir=values['output_dir'],
            snapshot_every=values['snapshot_every'],
            values=values,
            base_dir=base_dir,
        )

    def resolve(self, path: str) -> str:
        """Resolve a referenced file relative to the experiment file."""
        if os.path.isabs(path) or os.path.exists(path):
            return path
        return os.path.join(self.base_dir, path)

    def to_meta(self) -> Dict[str, Any]:
        return {'config': self.values, 'library_version': __version__}


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value


class ExperimentRunner:
    """Executes one experiment and records its assertions."""

    def __init__(self, experiment: ExperimentConfig):
        """
        Initialize experiment runner.

        Args:
            experiment: Validated experiment configuration
        """
        self.experiment = experiment
        self.solver = experiment.solver
        self.values = experiment.values
        self.logger = get_logger()
        self.assertions: List[Dict[str, Any]] = []
        self.details: Dict[str, Any] = {}

        self.handlers = {
            'evolve': self.run_evolve,
            'distance': self.run_distance,
            'energy': self.run_energy,
            'geodesic': self.run_geodesic,
            'hilbert': self.run_hilbert,
            'sweep-nu': self.run_sweep,
            'error-bound': self.run_error_bound,
            'spectral': self.run_spectral,
            'cross-validate': self.run_cross_validate,
            'validate': self.run_validate,
        }

    def check(self, name: str, passed: bool, value=None, bound=None) -> bool:
        """Record one assertion."""
        passed = bool(passed)
        self.assertions.append({'name': name, 'passed': passed, 'value': value, 'bound': bound})
        if passed:
            self.logger.info(f"  ✓ {name}: PASS")
        else:
            self.logger.log_check_event(f"{name}: FAIL (value {value}, bound {bound})", 'ERROR')
        return passed

    @property
    def passed(self) -> bool:
        return all(a['passed'] for a in self.assertions)

    def run(self) -> bool:
        """
        Run the configured command and write report.json.

        Returns:
            True if every assertion passed
        """
        command = self.experiment.command
        os.makedirs(self.experiment.output_dir, exist_ok=True)
        self.logger.log_experiment_event('START', command)
        self.handlers[command]()
        self.write_report()
        self.logger.log_experiment_event('DONE', f"{command} passed={self.passed}")
        return self.passed

    def write_report(self) -> str:
        path = os.path.join(self.experiment.output_dir, 'report.json')
        report = {
            'command': self.experiment.command,
            'passed': self.passed,
            'assertions': self.assertions,
            'details': self.details,
        }
        with open(path, 'w') as f:
            json.dump(_jsonable(report), f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    def initial_measure(self, second: bool = False) -> CellMeasure:
        data = dict(self.experiment.initial)
        if second:
            data['kind'] = self.values['second_initial']
            if self.values.get('second_a1') is not None:
                data['a1'] = self.values['second_a1']
        if data['kind'] == 'file':
            if not data.get('path'):
                raise ConfigError('path', "required for initial 'file'")
            data['path'] = self.experiment.resolve(data['path'])
        return initial_data(data['kind'], self.solver.N, data)

    def _measure_file(self, key: str) -> CellMeasure:
        path = self.values.get(key)
        if not path:
            raise ConfigError(key, 'required for this command')
        path = self.experiment.resolve(path)
        if not os.path.exists(path):
            raise ConfigError(key, f"file not found: {path}")
        return read_measure(path)

    def run_evolve(self) -> None:
        m0 = self.initial_measure()
        traj = evolve(m0, self.solver)
        write_trajectory(
            self.experiment.output_dir, traj, self.experiment.to_meta(), self.experiment.snapshot_every
        )

        violations = traj.decay_violations()
        self.check('energy_decay', not violations, len(violations), 0)
        if self.experiment.initial['kind'] == 'uniform':
            drift = float(np.max(np.abs(traj.totals - traj.totals[0])))
            self.check('uniform_fixed_point', drift <= 1e-12, drift, 1e-12)
        gap = energy_gap_check(traj)
        self.check('energy_gap_rate', gap['passed'], gap['worst_margin'], 1e-6)

        if self.values.get('second_initial'):
            r0 = self.initial_measure(second=True)
            report = contraction_check(
                m0, r0, self.solver, slack=self._diagnostic('contraction_slack', 1e-4)
            )
            self.check('contraction', report['passed'], report['max_distance'],
                       report['initial_distance'] + report['slack'])
            self.details['contraction'] = report

        self.details['final_energy'] = traj.energies[-1].to_dict()
        self.details['halvings'] = int(sum(traj.halvings))

    def run_distance(self) -> None:
        source = self._measure_file('source')
        target = self._measure_file('target')
        cells = dper2_quantile(source, target)
        a, b = atoms_of(source), atoms_of(target)
        if a.N == b.N:
            atomic, plan = dper2(a, b)
            oracle = dper2_oracle(a, b, 'assignment')
            self.details['plan'] = plan.to_dict()
        else:
            atomic = dper2_quantile(a, b)
            oracle = dper2_oracle(a, b, 'lp')
        deviation = abs(atomic - oracle)
        print(f"dper2 = {atomic:.17g}")
        print(f"dper2 (cells) = {cells:.17g}")
        self.details.update({'dper2_atoms': atomic, 'dper2_oracle': oracle, 'dper2_cells': cells})
        self.check('oracle_agreement', deviation <= 1e-10, deviation, 1e-10)

    def run_energy(self) -> None:
        m0 = self.initial_measure()
        report = free_energy(m0, self.solver.nu, self.solver.coeff)
        print(f"F = {report.total:.17g} (entropy {report.entropy:.17g}, interaction {report.interaction:.17g})")
        self.details['energy'] = report.to_dict()
        self.check('finite_energy', np.isfinite(report.total), report.total, None)

        if self.experiment.initial['kind'] == 'cantor':
            levels = list(range(3, 9))
            values = [free_energy(cantor_measure(n), 0.0, self.solver.coeff).total for n in levels]
            steps = np.abs(np.diff(values))
            self.details['cantor'] = {'levels': levels, 'energies': values}
            self.check('cantor_bounded', np.all(np.isfinite(values)), max(values), None)
            self.check('cantor_increments', bool(np.all(np.diff(steps) < 0.0)), steps[-1], steps[0])

    def run_geodesic(self) -> None:
        if self.values.get('source'):
            a = atoms_of(self._measure_file('source'))
            b = atoms_of(self._measure_file('target'))
        else:
            a = atoms_of(self.initial_measure())
            b = atoms_of(self.initial_measure(second=True))
        times = self.values.get('t_values') or [0.0, 0.25, 0.5, 0.75, 1.0]
        times = sorted(float(t) for t in times)
        cost, plan = dper2(a, b)
        d = np.sqrt(cost)
        points = [geodesic(a, b, t) for t in times]
        worst = 0.0
        for i in range(len(times) - 1):
            dst = np.sqrt(dper2(points[i], points[i + 1])[0])
            worst = max(worst, abs(dst - (times[i + 1] - times[i]) * d))
        self.details['plan'] = plan.to_dict()
        self.details['points'] = {str(t): p.positions for t, p in zip(times, points)}
        self.check('constant_speed', worst <= 1e-8, worst, 1e-8)

    def run_hilbert(self) -> None:
        M = self.values['M']
        modes = [int(k) for k in (self.values.get('modes') or range(1, 9))]
        x = grid_nodes(M)
        worst = 0.0
        for k in modes:
            worst = max(worst, float(np.max(np.abs(hilbert_transform(np.cos(k * x)) - np.sin(k * x)))))
            worst = max(worst, float(np.max(np.abs(hilbert_transform(np.sin(k * x)) + np.cos(k * x)))))
        self.check('multiplier', worst <= 1e-12, worst, 1e-12)

        Mq = max(M, 1024)
        u = to_density(self.initial_measure(), Mq).values
        pv = float(np.max(np.abs(hilbert_transform_pv(u) - hilbert_transform(u))))
        self.check('quadrature_oracle', pv <= 1e-4, pv, 1e-4)

    def run_sweep(self) -> None:
        nus = self.values.get('nus') or [0.2, 0.1, 0.05, 0.0]
        report = inviscid_sweep(
            self.initial_measure(), nus, self.solver, slack=self._diagnostic('sweep_slack', 0.2)
        )
        self.details['sweep'] = report
        for i, ok in enumerate(report['pairwise']):
            self.check(f"sweep_{nus[i]}_{nus[i + 1]}", ok, report['errors'][i + 1],
                       report['errors'][i] * (1.0 + self._diagnostic('sweep_slack', 0.2)))

    def run_error_bound(self) -> None:
        m0 = self.initial_measure()
        taus = self.values.get('taus') or [self.solver.tau]
        fine = self.values['fine_factor']
        for tau in taus:
            report = error_bound_check(m0, self.solver.nu, tau, self.solver.t_end, self.solver, fine)
            self.details[f"tau_{tau}"] = report
            self.check(f"error_bound_tau_{tau}", report['passed'], report['sup_dist2'], report['bound'])

    def run_spectral(self) -> None:
        v = self.values
        if v.get('scenario') == 'blowup':
            report = blowup_scenario(v['a1'], self.solver.nu, v['M'], self.solver.t_end, v['sample_dt'], v['dt'])
            self.details['blowup'] = report
            self.check('blowup_scenario', report['passed'], report['growth_window_start'], None)
            return

        if self.experiment.initial['kind'] == 'cosine':
            grid = cosine_grid(v['a1'], v['M'])
        else:
            grid = to_density(self.initial_measure(), v['M'])
        run = spectral_evolve(grid, self.solver.nu, v['dt'], self.solver.t_end, v['M'],
                              v['sample_dt'], v['flux_sign'])
        for i, state in enumerate(run.states()):
            write_grid(os.path.join(self.experiment.output_dir, f"grid_{i:06d}.grd"), state.grid)
        drift = float(np.max(np.abs(np.array(run.mass_modes) - run.mass_modes[0])))
        self.details.update({'status': run.status, 'abort_time': run.abort_time,
                             'times': run.times, 'l2_norms': run.l2_norms})
        self.check('mass_conserved', drift <= 1e-12 * abs(run.mass_modes[0]), drift,
                   1e-12 * abs(run.mass_modes[0]))
        self.check('no_breakdown', run.abort_time is None, run.abort_time, None)

    def run_cross_validate(self) -> None:
        v = self.values
        try:
            report = cross_validate(self.initial_measure(), self.solver, v['M'], dt=v['dt'])
        except ValueError as e:
            raise ConfigError('cross-validate', str(e))
        self.details['cross_validation'] = report
        self.check('cross_validation', report['max_distance'] <= CROSS_VALIDATION_TOL,
                   report['max_distance'], CROSS_VALIDATION_TOL)

    def run_validate(self) -> None:
        suite = AcceptanceSuite(self.values.get('scale') or 'quick', seed=self.solver.seed)
        suite.run()
        self.assertions.extend(suite.assertions())

    def _diagnostic(self, key: str, default: float) -> float:
        return get_config().get(f"diagnostics.{key}", default)


def main(argv=None):
    """Main entry point for the experiment runner."""
    parser = argparse.ArgumentParser(
        description='Wasserstein gradient flows on the circle'
    )
    parser.add_argument(
        '--config',
        required=True,
        help='Experiment JSON file (flat, version 1)'
    )
    parser.add_argument(
        '--output',
        default=None,
        help='Output directory (overrides output_dir of the config)'
    )
    parser.add_argument(
        '--quiet',
        action='store_true',
        help='Only log warnings and errors to the console'
    )

    args = parser.parse_args(argv)
    configure_logger(quiet=args.quiet)

    try:
        values = load_experiment(args.config)
        if args.output:
            values['output_dir'] = args.output
        experiment = ExperimentConfig.from_dict(values, os.path.dirname(os.path.abspath(args.config)))
        os.makedirs(experiment.output_dir, exist_ok=True)
        configure_logger(log_dir=experiment.output_dir, quiet=args.quiet)

        passed = ExperimentRunner(experiment).run()

    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        get_logger().error(f"Config error: {e}")
        return EXIT_CONFIG
    except SnapshotFormatError as e:
        print(f"snapshot error: {e}", file=sys.stderr)
        get_logger().error(f"Snapshot error: {e}")
        return EXIT_CONFIG
    except NonConvergenceError as e:
        print(f"non-convergence at step {e.step_index}: {e}", file=sys.stderr)
        get_logger().critical(f"Non-convergence at step {e.step_index}")
        return EXIT_NONCONVERGENCE
    except ValueError as e:
        print(f"invalid parameter: {e}", file=sys.stderr)
        get_logger().error(f"Invalid parameter: {e}")
        return EXIT_CONFIG

    if passed:
        print("\n✓ All assertions passed")
        return EXIT_OK
    print("\n✗ Some assertions failed (see report.json)")
    return EXIT_ASSERTION


if __name__ == '__main__':
    sys.exit(main())
