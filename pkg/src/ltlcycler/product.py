"""Environment x automaton products, rollouts and the trajectory JSON format.

Actions are either environment actions or a ``str`` naming a jump
(epsilon transition) available at the current automaton state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .automaton import LDBA, initial_transition, jump_edge, step

__all__ = [
    "ProductState",
    "Step",
    "ProductTrajectory",
    "product_step",
    "advance_frontier",
    "rollout",
    "accepting_visits",
    "trajectory_to_json",
    "trajectory_from_json",
    "load_trajectory",
]

TRAJECTORY_SCHEMA = "cycler.trajectory/1"


@dataclass
class ProductState:
    s: Any
    b: int
    e: np.ndarray

    def copy(self) -> "ProductState":
        s = self.s.copy() if isinstance(self.s, np.ndarray) else self.s
        return ProductState(s, self.b, self.e.copy())


@dataclass
class Step:
    s: Any
    b: int
    e: np.ndarray
    a: Any
    edge: int
    letter: frozenset[str]
    r_mdp: float


@dataclass
class ProductTrajectory:
    """``steps[t]`` holds the pre-state of transition ``t``; ``final`` the last state."""

    steps: list[Step]
    final: ProductState
    robustness: list[dict[str, float]] | None = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def states(self) -> list[Any]:
        return [st.s for st in self.steps] + [self.final.s]

    @property
    def automaton_states(self) -> list[int]:
        return [st.b for st in self.steps] + [self.final.b]

    @property
    def edges(self) -> list[int]:
        return [st.edge for st in self.steps]

    @property
    def r_mdp(self) -> np.ndarray:
        return np.array([st.r_mdp for st in self.steps], dtype=float)


def advance_frontier(e: np.ndarray, fired: int, b_next: int, ldba: LDBA) -> np.ndarray:
    """Mark ``fired`` as taken, then clear everything on reaching an accepting state."""
    e = e.copy()
    e[fired] = 1
    if b_next in ldba.accepting:
        e[:] = 0
    return e


def product_step(ldba: LDBA, env, ps: ProductState, a) -> tuple[ProductState, int, float]:
    """One product transition: returns the new state, the fired element and the MDP reward."""
    if isinstance(a, str):
        el = jump_edge(ldba, ps.b, a)
        s_new, b_new, fired, r = ps.s, el.dst, el.id, 0.0
    else:
        s_new, r = env.step(ps.s, a)
        b_new, fired = step(ldba, ps.b, env.label(s_new))
    e_new = advance_frontier(ps.e, fired, b_new, ldba)
    return ProductState(s_new, b_new, e_new), fired, float(r)


Policy = Callable[[ProductState, np.random.Generator], Any]


def rollout(policy: Policy, env, ldba: LDBA, horizon: int, seed: int = 0,
            record_robustness: bool = False) -> ProductTrajectory:
    """Roll ``policy`` out for exactly ``horizon`` product transitions."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    s0 = env.reset(rng)
    b0, _ = initial_transition(ldba, env.label(s0))
    ps = ProductState(s0, b0, np.zeros(ldba.num_elements, dtype=np.int8))
    steps = []
    for _ in range(horizon):
        a = policy(ps, rng)
        nxt, fired, r = product_step(ldba, env, ps, a)
        steps.append(Step(ps.s, ps.b, ps.e, a, fired, env.label(nxt.s), r))
        ps = nxt
    traj = ProductTrajectory(steps, ps)
    if record_robustness:
        traj.robustness = [env.robustness(s) for s in traj.states]
    return traj


def accepting_visits(traj: ProductTrajectory, accepting: Iterable[int]) -> int:
    """Number of transitions that land in an accepting state."""
    acc = set(accepting)
    return sum(1 for b in traj.automaton_states[1:] if b in acc)


def replay_frontiers(ldba: LDBA, b_seq: Sequence[int], edges: Sequence[int]) -> list[np.ndarray]:
    """Frontier before each transition, recomputed from the automaton path."""
    e = np.zeros(ldba.num_elements, dtype=np.int8)
    out = []
    for fired, b_next in zip(edges, b_seq[1:]):
        out.append(e)
        e = advance_frontier(e, fired, b_next, ldba)
    out.append(e)
    return out


# --------------------------------------------------------------------------
# JSON interchange


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def trajectory_to_json(traj: ProductTrajectory) -> list[dict]:
    """Step objects followed by a terminal ``{"s", "b"}`` record."""
    out = []
    for st in traj.steps:
        a = {"jump": st.a} if isinstance(st.a, str) else _jsonable(st.a)
        s = _jsonable(st.s)
        out.append({
            "s": s if isinstance(s, list) else [s],
            "b": int(st.b),
            "a": a if isinstance(a, (list, dict)) else [a],
            "edge": int(st.edge),
            "letter": sorted(st.letter),
            "r_mdp": float(st.r_mdp),
        })
    s = _jsonable(traj.final.s)
    out.append({"s": s if isinstance(s, list) else [s], "b": int(traj.final.b)})
    return out


def trajectory_from_json(data: Sequence[dict], ldba: LDBA, env=None) -> ProductTrajectory:
    """Rebuild a trajectory; frontiers are recomputed from the automaton path.

    A trailing record without ``edge`` is the final state. Without one, the
    final automaton state is the target of the last fired edge and the final
    environment state is unknown (``None``).
    """
    if isinstance(data, dict):
        data = data["steps"]
    allowed = {"s", "b", "a", "edge", "letter", "r_mdp"}
    recs = list(data)
    for rec in recs:
        extra = set(rec) - allowed
        if extra:
            raise ValueError(f"unknown trajectory keys: {sorted(extra)}")
    final_rec = None
    if recs and "edge" not in recs[-1]:
        final_rec = recs.pop()
    if not recs:
        raise ValueError("a trajectory needs at least one transition")
    steps = []
    for rec in recs:
        a = rec.get("a")
        if isinstance(a, dict):
            a = a["jump"]
        elif a is not None:
            a = np.asarray(a, dtype=float)
        steps.append(Step(
            np.asarray(rec["s"], dtype=float), int(rec["b"]), None, a,
            int(rec["edge"]), frozenset(rec.get("letter", ())), float(rec.get("r_mdp", 0.0)),
        ))
    if final_rec is not None:
        final_s, final_b = np.asarray(final_rec["s"], dtype=float), int(final_rec["b"])
    else:
        final_s, final_b = None, ldba.element(steps[-1].edge).dst
    b_seq = [st.b for st in steps] + [final_b]
    for t, st in enumerate(steps):
        el = ldba.element(st.edge)
        if el.src != b_seq[t] or el.dst != b_seq[t + 1]:
            raise ValueError(f"step {t}: edge {st.edge} does not connect {b_seq[t]} -> {b_seq[t + 1]}")
    fronts = replay_frontiers(ldba, b_seq, [st.edge for st in steps])
    for st, e in zip(steps, fronts):
        st.e = e
    traj = ProductTrajectory(steps, ProductState(final_s, final_b, fronts[-1]))
    if env is not None and final_s is not None:
        traj.robustness = [env.robustness(s) for s in traj.states]
    return traj


def load_trajectory(path, ldba: LDBA, env=None) -> ProductTrajectory:
    with open(path, encoding="utf-8") as fh:
        return trajectory_from_json(json.load(fh), ldba, env)
