#!/usr/bin/env python3
"""
Print the analytic sample-complexity grid for the UAV double integrator.
Run from project root: python debug_complexity_table.py [config]
"""
import sys

from dotenv import load_dotenv

load_dotenv()

from complexity_engine.bounds import analytic_report
from dynamics_service.models import make_double_integrator
from experiments.config import load_config
from moments_engine.expectation import expected_cost_breakdown

CONFIG = "configs/complexity_uav.json"


def main() -> None:
    config = load_config(sys.argv[1] if len(sys.argv) > 1 else CONFIG)
    print("=" * 72)
    print(f"Analytic complexity grid: lambda={config.pi.lam:g}, eps1={config.query.eps1:g}, eps2={config.query.eps2:g}")
    print("=" * 72)
    query = config.query.build(config.pi.lam)
    spec = config.cost.build(config.pi.dt, config.pi.lam)
    x0 = config.x0_array()
    print(f"{'a':>6} {'T':>5} {'E[S]/lambda':>14} {'indicator':>12} {'N1':>7} {'N2':>10} {'multiplier':>12}")
    for a in config.a_values:
        for horizon in config.horizons:
            dyn = make_double_integrator(a, horizon)
            inner = config.pi.build(dyn.m, horizon=horizon)
            breakdown = expected_cost_breakdown(dyn, spec, inner.nominal, x0, inner.noise_gain)
            report = analytic_report(query, breakdown.total, config.query.hoeffding_form)
            indicator = float(breakdown.indicator.sum() * breakdown.dt)
            print(
                f"{a:>6g} {horizon:>5d} {breakdown.total / config.pi.lam:>14.4f} {indicator:>12.4g} "
                f"{report.n1:>7d} {str(report.n2):>10} {str(report.multiplier):>12.10}"
            )


if __name__ == "__main__":
    main()
