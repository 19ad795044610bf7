"""Compare the four cut families on a node whose LP relaxation is loose.

Prints each family's cut at the all-on anchor next to the true node value,
then runs the decomposition with each family: BC stalls with a gap left open.
"""

import numpy as np

from wildfire_psps.cuts import (benders_cut, lagrangian_cut, node_value, square_min_cut,
                                strengthened_benders_cut)
from wildfire_psps.engine import EngineConfig, run
from wildfire_psps.evaluation import extensive_form_solve
from wildfire_psps.formulation import FormulationOptions, build_node
from wildfire_psps.instances import pmin_gap_instance


def main():
    net, tree = pmin_gap_instance()
    anchor = np.ones(net.n_components)
    nid = "w00003"
    model = build_node(net, tree, nid)
    f = node_value(model, anchor).objective
    print(f"node {nid}: components {net.components}, value at all-on anchor {f:.2f}")
    cuts = {"BC": benders_cut(model, anchor),
            "SBC": strengthened_benders_cut(model, anchor),
            "LC": lagrangian_cut(model, anchor),
            "SMC": square_min_cut(model, anchor, delta=1e-4)}
    for fam, cut in cuts.items():
        print(f"  {fam:<4} intercept {cut.intercept:9.2f}  |slope| "
              f"{np.linalg.norm(cut.slope):8.2f}  slope {np.round(cut.slope, 2)}")

    exact = extensive_form_solve(net, tree).value
    print(f"\nextensive-form optimum {exact:.4f}")
    for fam in ("BC", "SBC", "LC", "SMC"):
        rep = run(net, tree, FormulationOptions(), EngineConfig(cut_family=fam, epsilon=0.0))
        print(f"  {fam:<4} {rep.reason:<10} lb {rep.lb:10.4f} ub {rep.ub:10.4f} "
              f"gap {rep.gap:8.3%} iterations {rep.iterations}")


if __name__ == "__main__":
    main()
