"""
Checking the Lagrange multiplier bound by enumeration
=====================================================

On a tiny deterministic GridLab every memoryless product policy ends in a
lasso, so its eventual-discounted LTL value and discounted reward have
closed forms. Enumerating them shows that once lambda exceeds the bound the
unconstrained optimum only picks policies that also maximise the constraint.
"""

import numpy as np

from ltlcycler.automaton import parse_ldba
from ltlcycler.envs import gridlab_build
from ltlcycler.exact import random_gapped_fixture, verify_lambda_bound

# State 0 pays 1 per step but never sees p; states 1 and 2 loop through p for free.
grid = gridlab_build({"aps": ["p"], "transitions": [[0, 1], [2, 2], [1, 1]],
                      "labels": [[], ["p"], []], "rewards": [[1, 0], [0, 0], [0, 0]]})
ldba = parse_ldba("ldba v1\naps: p\nstates: 2\ninitial: 0\naccepting: 1\n"
                  "edge: 0 -> 1 : p\nedge: 0 -> 0 : !p\nedge: 1 -> 1 : p\nedge: 1 -> 0 : !p\n")

rep = verify_lambda_bound(grid, ldba, gamma=0.9, gamma_phi=0.9)
print(f"{rep.num_policies} policies, V_max {rep.V_max:.4f}, gap {rep.gap:.4f}, lambda* {rep.lambda_star:.2f}")
for lam, winners in sorted(rep.dual_argmax.items()):
    print(f"lambda {lam:8.2f}: argmax V = {np.round(rep.V[winners], 4)}  R = {np.round(rep.R[winners], 4)}")

# %%
# The same check on a batch of random fixtures.
rng = np.random.default_rng(0)
oks = [verify_lambda_bound(*random_gapped_fixture(rng), 0.9, 0.9).ok for _ in range(20)]
print(f"{sum(oks)}/20 random fixtures respect the bound")
