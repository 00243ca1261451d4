"""
Training on FlatWorld
=====================

A short run of the numpy actor-critic with quantitative cycle shaping,
followed by stochastic evaluation. Pass a number of episodes on the command
line for a longer run; 2000 episodes take around half a minute.
"""

import sys
import time

from ltlcycler import load_flatworld_ldba
from ltlcycler.learn import TrainConfig, default_flatworld, evaluate, train

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
env = default_flatworld(bonus_seed=0)
ldba = load_flatworld_ldba()

for shaping in ("cycler-qs", "unshaped"):
    cfg = TrainConfig(shaping=shaping, episodes=episodes, seed=0)
    t0 = time.perf_counter()
    policy, _, log = train(env, ldba, cfg)
    res = evaluate(policy, env, ldba, horizon=360, n_rollouts=10, seed=1)
    print(f"{shaping:10s} {time.perf_counter() - t0:5.1f}s  last batch visits {log[-1].accepting_visits:.2f}  "
          f"eval visits {res.visits_mean:.1f} +/- {res.visits_std:.1f}  r_mdp {res.mdp_mean:.1f}")
