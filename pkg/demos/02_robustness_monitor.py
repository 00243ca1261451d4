"""
Quantitative semantics on a short trace
=======================================

Evaluate ``F(r) & G(!b)`` on a four-point FlatWorld trace. The robustness is
positive exactly when the trace satisfies the formula, and its size says by
how much.
"""

import numpy as np

from ltlcycler import bool_eval, parse_ltl, qs_eval
from ltlcycler.envs import FlatWorldConfig, fw_label, fw_robustness

cfg = FlatWorldConfig()
points = [(-1.0, -1.0), (0.5, -1.0), (1.0, 0.0), (0.5, 1.0)]
trace = [fw_robustness(p, cfg) for p in points]
for p, rv in zip(points, trace):
    print(p, sorted(fw_label(p, cfg)), {k: round(v, 3) for k, v in rv.items()})

phi = parse_ltl("F(r) & G(!b)", list(cfg.regions))
value = qs_eval(phi, trace, cfg.qs_config())
print("robustness", round(value, 4))

# %%
# The same number from first principles: the best red margin along the trace
# against the worst blue clearance.
c_r = max(rv["r"] for rv in trace)
c_b = min(-rv["b"] for rv in trace)
print("min(c_r, c_b) =", round(min(c_r, c_b), 4))

# %%
# Guards on automaton edges use the Boolean evaluator on a single label.
guard = parse_ltl("r & !b", list(cfg.regions))
print([bool_eval(guard, fw_label(p, cfg)) for p in points])

# %%
# Dragging the last point into blue flips the verdict.
trace[-1] = fw_robustness(np.array(cfg.regions["b"].center), cfg)
print("after entering blue", round(qs_eval(phi, trace, cfg.qs_config()), 4))
