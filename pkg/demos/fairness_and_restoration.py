"""Sweep the fairness level and toggle restoration on small instances.

Tighter fairness (smaller beta) can only raise the optimal cost, and allowing
re-energization can only lower it; the printout shows both effects.
"""

import math

from wildfire_psps.engine import EngineConfig
from wildfire_psps.evaluation import compare_restoration, fairness_metrics, solve_plan
from wildfire_psps.formulation import FormulationOptions
from wildfire_psps.instances import fairness_instance, restoration_instance


def main():
    cfg = EngineConfig(epsilon=0.0)
    net, tree = fairness_instance()
    print("fairness sweep (beta, objective, max pairwise shed gap, total shed fraction)")
    for beta in (0.0, 0.2, 0.4, 0.6, math.inf):
        plan, obj = solve_plan(net, tree, FormulationOptions(beta=beta), "decomposition", cfg)
        fm = fairness_metrics(plan, net)
        print(f"  {beta:>4} {obj:10.2f} {fm.max_gap:6.3f} {fm.total_shed_fraction:6.3f}")

    print("\nrestoration comparison (variant, restoration, nominal, disruptive, damage, total)")
    for variant in range(3):
        net, tree = restoration_instance(variant=variant)
        for row in compare_restoration(net, tree, [math.inf], method="decomposition",
                                       config=cfg):
            print(f"  {variant} {int(row.restoration)} {row.nominal_shed:9.2f} "
                  f"{row.disruptive_shed:9.2f} {row.damage:9.2f} {row.total:9.2f}")


if __name__ == "__main__":
    main()
