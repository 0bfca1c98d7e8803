#!/usr/bin/env python3
"""
Example script demonstrating the circleflow solvers.
This shows how to use the transport, energy and flow modules step by step.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))

from measure import AtomMeasure, cosine_measure, dirac_measure, uniform_measure
from circot import dper2, dper2_quantile, geodesic
from energy import free_energy
from jko import SolverConfig, evolve
from spectral import blowup_scenario
from utils.logger import get_logger


def example_transport():
    """
    Example 1: Periodic transport between atoms.
    Good first look at the distance and its geodesics.
    """
    print("\n" + "=" * 70)
    print("EXAMPLE 1: PERIODIC TRANSPORT")
    print("=" * 70)

    a = AtomMeasure.equal([-2.5, -0.5, 1.0, 2.8])
    b = AtomMeasure.equal([-2.9, 0.2, 1.5, 2.2])
    cost, plan = dper2(a, b)
    print(f"dper2 = {cost:.6f}, shift k = {plan.shift}")
    for t in (0.0, 0.5, 1.0):
        print(f"  geodesic at t = {t}: {np.round(geodesic(a, b, t).positions, 4)}")


def example_energy():
    """
    Example 2: Free energy of canonical data.
    """
    print("\n" + "=" * 70)
    print("EXAMPLE 2: FREE ENERGY")
    print("=" * 70)

    for name, m in [('uniform', uniform_measure(128)),
                    ('cosine a1=0.1', cosine_measure(0.1, 128)),
                    ('dirac eps=1e-3', dirac_measure(1e-3, 128))]:
        report = free_energy(m, 0.1)
        print(f"{name:>16}: F = {report.total:+.6f} "
              f"(entropy {report.entropy:+.4f}, interaction {report.interaction:+.4f})")


def example_flow():
    """
    Example 3: Minimizing-movement flow from cosine data.
    """
    print("\n" + "=" * 70)
    print("EXAMPLE 3: GRADIENT FLOW")
    print("=" * 70)

    logger = get_logger()
    config = SolverConfig(nu=0.1, tau=0.05, t_end=2.0, N=64)
    traj = evolve(cosine_measure(0.1, 64), config)
    dist = traj.dist_to_minimizer()
    for k in range(0, len(traj), 8):
        print(f"  t = {traj.times[k]:.2f}  F = {traj.totals[k]:+.8f}  d(u, uniform) = {dist[k]:.3e}")
    logger.info(f"✓ Energy decay violations: {len(traj.decay_violations())}")

    final = traj.snapshots[-1]
    print(f"Distance of the final state to uniform: {np.sqrt(dper2_quantile(final, uniform_measure(64))):.3e}")


def example_blowup():
    """
    Example 4: Concentration under the opposite flux sign.
    """
    print("\n" + "=" * 70)
    print("EXAMPLE 4: SPECTRAL CONCENTRATION")
    print("=" * 70)

    for a1, nu in [(0.1, 0.01), (0.01, 0.5)]:
        report = blowup_scenario(a1, nu, M=128, t_end=1.0)
        norms = report['l2_norms']
        print(f"a1 = {a1}, nu = {nu}: growth expected {report['growth_expected']}, "
              f"L2 {norms[0]:.4f} -> {norms[-1]:.4f}, passed {report['passed']}")


def main():
    """Main menu for examples."""
    print("\n" + "=" * 70)
    print("CIRCLEFLOW EXAMPLES")
    print("=" * 70)
    print("\nChoose an example:")
    print("1. Periodic Transport (Recommended first)")
    print("2. Free Energy")
    print("3. Gradient Flow")
    print("4. Spectral Concentration")
    print("0. Exit")

    try:
        choice = input("\nEnter choice (0-4): ").strip()

        if choice == '1':
            example_transport()
        elif choice == '2':
            example_energy()
        elif choice == '3':
            example_flow()
        elif choice == '4':
            example_blowup()
        elif choice == '0':
            print("Goodbye!")
        else:
            print("Invalid choice!")

    except KeyboardInterrupt:
        print("\n\nInterrupted by user!")
    except Exception as e:
        print(f"\nError: {str(e)}")


if __name__ == '__main__':
    main()
