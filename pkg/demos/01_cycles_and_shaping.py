"""
Cycles of the FlatWorld automaton and the shaped reward they induce
===================================================================

Load the bundled automaton for "visit red, green and yellow forever while
never touching blue", list its accepting cycles, then shape a three-step
trajectory that reaches red and then green.
"""

import numpy as np

from ltlcycler import find_macs, find_maips, load_flatworld_ldba, shape_trajectory
from ltlcycler.envs import FlatWorld, FlatWorldConfig
from ltlcycler.product import rollout
from ltlcycler.shaping import QS, ShapingConfig

ldba = load_flatworld_ldba()
print(f"{ldba.num_states} states (sink {ldba.sink}), {len(ldba.edges)} edges")

# %%
# Minimal accepting initial paths, rooted at the state we will be in after
# leaving the start corner.
for c in find_maips(ldba, start=1):
    print("MAIP", c.describe(ldba))
print(len(find_macs(ldba)), "minimal accepting cycles")

# %%
# A scripted trajectory with big steps: red, then empty space, then green.
env = FlatWorld(FlatWorldConfig(step_scale=1.0, action_bound=1.5))
moves = iter([np.array([1.5, 0.0]), np.array([0.5, 1.0]), np.array([-0.5, 1.0])])
traj = rollout(lambda ps, rng: next(moves), env, ldba, 3, record_robustness=True)
print("automaton path", traj.automaton_states)

rt = shape_trajectory(traj, ldba)
print("discrete shaped reward", [str(q) for q in rt.r_exact])

# %%
# The quantitative variant pays for getting closer to the next region too.
rt_qs = shape_trajectory(traj, ldba, ShapingConfig(mode=QS, qs=env.qs_config()))
print("quantitative shaped reward", np.round(rt_qs.r_cycler, 4))
