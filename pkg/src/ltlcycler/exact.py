"""Exact values of deterministic memoryless policies on small deterministic products.

Under a deterministic policy a finite deterministic product has one
trajectory, which is a lasso: a prefix followed by a cycle repeated forever.
Both the discounted MDP return and the eventually-discounted LTL value then
have closed forms, so every policy can be scored exactly and the Lagrangian
threshold can be checked by enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .automaton import LDBA, initial_transition, step
from .envs import GridLab, gridlab_build
from .shaping import lambda_bound

__all__ = [
    "ProductGraph",
    "Lasso",
    "ExactReport",
    "build_product",
    "enumerate_policies",
    "lasso_of",
    "lasso_values",
    "lasso_truncated_values",
    "simulate_values",
    "exact_values",
    "verify_lambda_bound",
    "random_gridlab",
    "random_ldba",
    "random_gapped_fixture",
]

MAX_POLICIES = 10**6


@dataclass
class ProductGraph:
    """Reachable product states with their available actions.

    ``actions[i]`` lists environment actions (ints) and jump ids (strs);
    ``succ[i][k]`` and ``reward[i][k]`` describe taking ``actions[i][k]``.
    """

    states: list[tuple[int, int]]
    actions: list[list]
    succ: list[list[int]]
    reward: list[list[float]]
    accepting: np.ndarray  # bool per product state

    @property
    def size(self) -> int:
        return len(self.states)

    def num_policies(self) -> int:
        return math.prod(len(a) for a in self.actions)


def build_product(grid: GridLab, ldba: LDBA) -> ProductGraph:
    s0 = grid.start
    b0, _ = initial_transition(ldba, grid.label(s0))
    index = {(s0, b0): 0}
    states = [(s0, b0)]
    actions, succ, reward = [], [], []
    i = 0
    while i < len(states):
        s, b = states[i]
        acts, nxts, rews = [], [], []
        for a in range(grid.num_actions):
            s2, r = grid.step(s, a)
            b2, _ = step(ldba, b, grid.label(s2))
            acts.append(a)
            nxts.append((s2, b2))
            rews.append(r)
        for e in ldba.jumps_at(b):
            acts.append(e.jump_id)
            nxts.append((s, e.dst))
            rews.append(0.0)
        row = []
        for key in nxts:
            if key not in index:
                index[key] = len(states)
                states.append(key)
            row.append(index[key])
        actions.append(acts)
        succ.append(row)
        reward.append(rews)
        i += 1
    acc = np.array([b in ldba.accepting for _, b in states])
    return ProductGraph(states, actions, succ, reward, acc)


def enumerate_policies(pg: ProductGraph) -> np.ndarray:
    """All deterministic policies as an array of action indices, shape (P, n)."""
    n_pol = pg.num_policies()
    if n_pol > MAX_POLICIES:
        raise ValueError(f"{n_pol} policies exceeds the enumeration limit of {MAX_POLICIES}")
    sizes = [len(a) for a in pg.actions]
    return np.array(list(itertools.product(*[range(k) for k in sizes])), dtype=np.int64).reshape(n_pol, pg.size)


@dataclass(frozen=True)
class Lasso:
    rewards: tuple[float, ...]  # per visited product state, prefix then cycle
    accepting: tuple[bool, ...]
    prefix: int
    cycle: int


def lasso_of(pg: ProductGraph, policy) -> Lasso:
    seen: dict[int, int] = {}
    cur = 0
    order = []
    while cur not in seen:
        seen[cur] = len(order)
        order.append(cur)
        cur = pg.succ[cur][policy[cur]]
    p = seen[cur]
    rewards = tuple(pg.reward[i][policy[i]] for i in order)
    acc = tuple(bool(pg.accepting[i]) for i in order)
    return Lasso(rewards, acc, p, len(order) - p)


def lasso_values(lasso: Lasso, gamma: float, gamma_phi: float) -> tuple[float, float]:
    """Closed-form ``(V, R)`` of an infinite lasso trajectory.

    ``V`` weights the ``k``-th accepting visit by ``gamma_phi ** k`` (the visit
    itself counts), ``R`` is the ``gamma``-discounted MDP return.
    """
    p, L = lasso.prefix, lasso.cycle
    r = np.asarray(lasso.rewards)
    prefix_R = math.fsum(gamma ** t * r[t] for t in range(p))
    cycle_R = math.fsum(gamma ** i * r[p + i] for i in range(L))
    R = prefix_R + gamma ** p * cycle_R / (1.0 - gamma ** L)
    m = sum(lasso.accepting[:p])
    q = sum(lasso.accepting[p:])
    V = gamma_phi * (1.0 - gamma_phi ** m) / (1.0 - gamma_phi)
    if q:
        V += gamma_phi ** (m + 1) / (1.0 - gamma_phi)
    return V, R


def lasso_truncated_values(lasso: Lasso, gamma: float, gamma_phi: float, n: int) -> tuple[float, float]:
    """Closed-form ``(V, R)`` over the first ``n`` states of the lasso."""
    p, L = lasso.prefix, lasso.cycle
    r = np.asarray(lasso.rewards)
    head = min(p, n)
    R = math.fsum(gamma ** t * r[t] for t in range(head))
    visits = sum(lasso.accepting[:head])
    if n > p:
        full, rem = divmod(n - p, L)
        cycle_R = math.fsum(gamma ** i * r[p + i] for i in range(L))
        rem_R = math.fsum(gamma ** i * r[p + i] for i in range(rem))
        gl = gamma ** L
        R += gamma ** p * (cycle_R * (1.0 - gl ** full) / (1.0 - gl) + gl ** full * rem_R)
        visits += full * sum(lasso.accepting[p:]) + sum(lasso.accepting[p:p + rem])
    V = gamma_phi * (1.0 - gamma_phi ** visits) / (1.0 - gamma_phi)
    return V, R


def simulate_values(pg: ProductGraph, policy, gamma: float, gamma_phi: float, n: int) -> tuple[float, float]:
    """Step-by-step sums over ``n`` states, independent of the lasso algebra."""
    cur, j, V, R = 0, 0, 0.0, 0.0
    for t in range(n):
        if pg.accepting[cur]:
            j += 1
            V += gamma_phi ** j
        R += gamma ** t * pg.reward[cur][policy[cur]]
        cur = pg.succ[cur][policy[cur]]
    return V, R


def _batch_lassos(pg: ProductGraph, policies: np.ndarray, gamma: float, gamma_phi: float):
    """Vectorised closed-form values for many policies at once."""
    P, n = policies.shape
    width = max(len(a) for a in pg.actions)
    succ = np.zeros((n, width), dtype=np.int64)
    rew = np.zeros((n, width))
    for i in range(n):
        succ[i, : len(pg.succ[i])] = pg.succ[i]
        rew[i, : len(pg.reward[i])] = pg.reward[i]
    rows = np.arange(P)
    first = np.full((P, n), -1, dtype=np.int64)
    r_seq = np.zeros((P, n + 1))
    a_seq = np.zeros((P, n + 1), dtype=bool)
    cur = np.zeros(P, dtype=np.int64)
    prefix = np.full(P, -1, dtype=np.int64)
    length = np.zeros(P, dtype=np.int64)
    for t in range(n + 1):
        live = prefix < 0
        if not live.any():
            break
        idx = rows[live]
        c = cur[live]
        hit = first[idx, c] >= 0
        done = idx[hit]
        prefix[done] = first[done, cur[done]]
        length[done] = t
        go = idx[~hit]
        cg = cur[go]
        first[go, cg] = t
        act = policies[go, cg]
        r_seq[go, t] = rew[cg, act]
        a_seq[go, t] = pg.accepting[cg]
        cur[go] = succ[cg, act]
    cycle = length - prefix
    t_idx = np.arange(n + 1)
    in_prefix = t_idx[None, :] < prefix[:, None]
    in_cycle = (~in_prefix) & (t_idx[None, :] < length[:, None])
    disc = gamma ** t_idx
    prefix_R = (r_seq * disc * in_prefix).sum(axis=1)
    cycle_R = (r_seq * disc * in_cycle).sum(axis=1) / (1.0 - gamma ** cycle)
    R = prefix_R + cycle_R
    m = (a_seq & in_prefix).sum(axis=1)
    q = (a_seq & in_cycle).sum(axis=1)
    V = gamma_phi * (1.0 - gamma_phi ** m) / (1.0 - gamma_phi)
    V = V + np.where(q > 0, gamma_phi ** (m + 1) / (1.0 - gamma_phi), 0.0)
    # last accepting visit time for trajectories that stop visiting
    last = np.where(a_seq & in_prefix, t_idx[None, :], -1).max(axis=1)
    last = np.where(q > 0, -1, last)
    return V, R, last


def exact_values(grid: GridLab, ldba: LDBA, gamma: float, gamma_phi: float):
    """Per-policy ``(V, R)`` for every deterministic memoryless product policy.

    Returns ``(product_graph, policies, V, R, last_visit)``; ``last_visit`` is
    the final accepting-visit time of policies that visit finitely often
    (``-1`` otherwise).
    """
    if not 0 < gamma < 1 or not 0 < gamma_phi < 1:
        raise ValueError("discount factors must lie in (0, 1)")
    pg = build_product(grid, ldba)
    policies = enumerate_policies(pg)
    V, R, last = _batch_lassos(pg, policies, gamma, gamma_phi)
    return pg, policies, V, R, last


@dataclass
class ExactReport:
    V: np.ndarray
    R: np.ndarray
    V_max: float
    gap: float
    r_max: float
    r_min: float
    lambda_star: float
    constrained_argmax: list[int]
    dual_argmax: dict[float, list[int]] = field(default_factory=dict)
    containment: dict[float, bool] = field(default_factory=dict)
    attains_max_R: dict[float, bool] = field(default_factory=dict)
    assumption_holds: bool = True
    max_last_visit: int = -1
    num_policies: int = 0
    product_size: int = 0

    @property
    def ok(self) -> bool:
        return self.assumption_holds and all(self.containment.values()) and all(self.attains_max_R.values())

    def to_dict(self) -> dict:
        return {
            "schema": "cycler.oracle/1",
            "num_policies": self.num_policies,
            "product_states": self.product_size,
            "V_max": self.V_max,
            "gap": None if math.isinf(self.gap) else self.gap,
            "R_max_step": self.r_max,
            "R_min_step": self.r_min,
            "lambda_star": self.lambda_star,
            "assumption_holds": self.assumption_holds,
            "constrained_argmax": self.constrained_argmax,
            "checks": [
                {
                    "lambda": lam,
                    "dual_argmax": self.dual_argmax[lam],
                    "contained_in_V_max": self.containment.get(lam),
                    "attains_max_R": self.attains_max_R.get(lam),
                }
                for lam in self.dual_argmax
            ],
            "max_last_visit": self.max_last_visit,
            "ok": self.ok,
        }


def _argmax_set(x: np.ndarray, tol: float) -> np.ndarray:
    top = x.max()
    return np.flatnonzero(x >= top - tol * max(1.0, abs(top)))


def verify_lambda_bound(grid: GridLab, ldba: LDBA, gamma: float, gamma_phi: float,
                        factors=(1.01, 10.0), extra_lambdas=(0.0,), tol: float = 1e-9) -> ExactReport:
    """Enumerate policies and check that the dual argmax respects the LTL constraint.

    For each ``lam = factor * lambda_star`` the maximisers of ``R + lam V``
    must all be ``V``-maximal and must attain the best ``R`` among
    ``V``-maximal policies. ``extra_lambdas`` are reported without checks.
    """
    pg, policies, V, R, last = exact_values(grid, ldba, gamma, gamma_phi)
    vtol = 1e-12
    V_max = float(V.max())
    is_max = V >= V_max - vtol * max(1.0, abs(V_max))
    lower = V[~is_max]
    gap = float(V_max - lower.max()) if lower.size else math.inf
    step_rewards = [r for row in pg.reward for r in row]
    r_max, r_min = max(step_rewards), min(step_rewards)
    report = ExactReport(
        V=V, R=R, V_max=V_max, gap=gap, r_max=r_max, r_min=r_min, lambda_star=0.0,
        constrained_argmax=[], num_policies=len(V), product_size=pg.size,
        max_last_visit=int(last.max()) if last.size else -1,
    )
    max_set = np.flatnonzero(is_max)
    best_R = R[max_set].max()
    report.constrained_argmax = [int(i) for i in max_set[R[max_set] >= best_R - tol * max(1.0, abs(best_R))]]
    if gap <= 0:
        report.assumption_holds = False
        return report
    report.lambda_star = 0.0 if math.isinf(gap) else lambda_bound(r_max, r_min, gap, gamma)
    for lam in extra_lambdas:
        report.dual_argmax[float(lam)] = [int(i) for i in _argmax_set(R + lam * V, tol)]
    for f in factors:
        lam = f * report.lambda_star
        winners = _argmax_set(R + lam * V, tol)
        report.dual_argmax[float(lam)] = [int(i) for i in winners]
        report.containment[float(lam)] = bool(is_max[winners].all())
        report.attains_max_R[float(lam)] = bool(R[winners].max() >= best_R - tol * max(1.0, abs(best_R)))
    return report


# --------------------------------------------------------------------------
# random fixtures


def random_gridlab(rng: np.random.Generator, n_states: int, n_actions: int,
                   aps=("p",), p_label: float = 0.4) -> GridLab:
    trans = rng.integers(0, n_states, size=(n_states, n_actions))
    labels = [[a for a in aps if rng.random() < p_label] for _ in range(n_states)]
    rewards = rng.integers(-2, 3, size=(n_states, n_actions)).astype(float)
    return gridlab_build({
        "aps": list(aps),
        "transitions": trans.tolist(),
        "labels": labels,
        "rewards": rewards.tolist(),
        "start": 0,
    })


def random_ldba(rng: np.random.Generator, n_states: int, aps=("p",)) -> LDBA:
    """Complete deterministic automaton: one edge per (state, letter) with a minterm guard."""
    from .automaton import Edge, _validate
    from .logic import Formula, atom

    edges = []
    for s in range(n_states):
        for mask in range(1 << len(aps)):
            lits = [atom(a) if mask >> i & 1 else Formula("not", (atom(a),)) for i, a in enumerate(aps)]
            guard = lits[0]
            for lit in lits[1:]:
                guard = Formula("and", (guard, lit))
            edges.append(Edge(len(edges), s, guard, int(rng.integers(0, n_states))))
    k = int(rng.integers(1, n_states + 1))
    accepting = frozenset(int(x) for x in rng.choice(n_states, size=k, replace=False))
    ldba = LDBA(tuple(aps), n_states, 0, accepting, tuple(edges), declared_states=n_states)
    return _validate(ldba, allow_partial=False)


def random_gapped_fixture(rng: np.random.Generator, max_product: int = 12, max_actions: int = 3,
                          gamma: float = 0.9, gamma_phi: float = 0.9, tries: int = 1000):
    """Draw GridLab/automaton pairs until the product is small and the V values separate."""
    for _ in range(tries):
        grid = random_gridlab(rng, int(rng.integers(2, 5)), int(rng.integers(2, max_actions + 1)))
        ldba = random_ldba(rng, int(rng.integers(2, 4)))
        pg = build_product(grid, ldba)
        if pg.size > max_product:
            continue
        V, _, _ = _batch_lassos(pg, enumerate_policies(pg), gamma, gamma_phi)
        if V.max() - V.min() > 1e-9:
            return grid, ldba
    raise RuntimeError("no gapped fixture found")
