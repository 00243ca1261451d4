"""Random fixtures and independent oracles shared by the test modules."""

from __future__ import annotations

import itertools

import numpy as np

from ltlcycler.automaton import LDBA, letter_mask, mask_letter, parse_ldba
from ltlcycler.learn import Batch, _log_prob_parts
from ltlcycler.logic import Formula, QSConfig
from ltlcycler.product import ProductState, ProductTrajectory, replay_frontiers, Step

APS = ("p", "q", "r")


def minterm(mask: int, aps) -> str:
    return " & ".join(a if mask >> i & 1 else "!" + a for i, a in enumerate(aps))


def random_ldba_text(rng: np.random.Generator, n_states: int, n_aps: int, p_edge: float = 0.8,
                     max_nondet: int = 2) -> str:
    """An ``ldba v1`` file with a small nondeterministic prefix and jumps into the rest."""
    aps = APS[:n_aps]
    n_letters = 1 << n_aps
    k = int(rng.integers(0, min(max_nondet, n_states - 1) + 1))
    nondet = list(range(k))
    det = list(range(k, n_states))
    n_acc = int(rng.integers(0, len(det) + 1))
    accepting = sorted(int(x) for x in rng.choice(det, size=n_acc, replace=False))
    lines = ["ldba v1", "aps: " + " ".join(aps), f"states: {n_states}", "initial: 0",
             "nondet: " + " ".join(map(str, nondet)), "accepting: " + " ".join(map(str, accepting))]
    for s in range(n_states):
        targets = det if s in det else list(range(n_states))
        groups: dict[int, list[int]] = {}
        for m in range(n_letters):
            if rng.random() < p_edge:
                groups.setdefault(int(rng.choice(targets)), []).append(m)
            if s in nondet and rng.random() < 0.3:
                groups.setdefault(int(rng.choice(targets)), []).append(m)
        for dst, masks in groups.items():
            masks = sorted(set(masks))
            rng.shuffle(masks)
            cut = int(rng.integers(1, len(masks) + 1))
            for part in (masks[:cut], masks[cut:]):
                if part:
                    guard = " | ".join(f"({minterm(m, aps)})" for m in sorted(part))
                    lines.append(f"edge: {s} -> {dst} : {guard}")
    for s in nondet:
        for j in range(int(rng.integers(0, 3))):
            lines.append(f"eps: {s} -> {int(rng.choice(det))} : e{j}")
    return "\n".join(lines) + "\n"


def random_ldba(rng, n_states, n_aps, **kw) -> LDBA:
    return parse_ldba(random_ldba_text(rng, n_states, n_aps, **kw), allow_partial=True)


def random_walk(ldba: LDBA, rng: np.random.Generator, horizon: int, qs: QSConfig | None = None,
                p_jump: float = 0.2) -> ProductTrajectory:
    """Random product trajectory with letters drawn uniformly; jumps taken at random.

    Nondeterministic states may match several edges for a letter; one of them
    is chosen. Robustness vectors agree in sign with the drawn letters.
    """
    n_letters = 1 << len(ldba.aps)
    b = ldba.initial
    steps = []
    masks = []
    for _ in range(horizon):
        jumps = ldba.jumps_at(b)
        if jumps and rng.random() < p_jump:
            el = jumps[int(rng.integers(len(jumps)))]
            steps.append(Step(None, b, None, el.jump_id, el.id, frozenset(), 0.0))
            masks.append(masks[-1] if masks else 0)
            b = el.dst
            continue
        m = int(rng.integers(n_letters))
        options = [e for e in ldba.edges if e.src == b and ldba.guard_table(e.id)[m]]
        el = options[int(rng.integers(len(options)))]
        steps.append(Step(None, b, None, None, el.id, mask_letter(m, ldba.aps), 0.0))
        masks.append(m)
        b = el.dst
    b_seq = [st.b for st in steps] + [b]
    fronts = replay_frontiers(ldba, b_seq, [st.edge for st in steps])
    for st, e in zip(steps, fronts):
        st.e = e
    traj = ProductTrajectory(steps, ProductState(None, b, fronts[-1]))
    if qs is not None:
        m0 = int(rng.integers(n_letters))
        rv = []
        for m in [m0] + masks:
            mag = rng.uniform(0.01, 1.0, size=len(ldba.aps))
            sign = np.array([1.0 if m >> i & 1 else -1.0 for i in range(len(ldba.aps))])
            vals = np.clip(sign * mag * rng.choice([qs.rho_max, -qs.rho_min], size=len(ldba.aps)),
                           qs.rho_min, qs.rho_max)
            rv.append(dict(zip(ldba.aps, vals.tolist())))
        traj.robustness = rv
    return traj


# --------------------------------------------------------------------------
# formula oracles


class Undefined(Exception):
    pass


def qs_oracle(f: Formula, trace, cfg: QSConfig, t: int = 0, end: int | None = None) -> float:
    """Direct recursion over windows ``[t, end)`` following the rule table."""
    end = len(trace) if end is None else end
    op = f.op
    if op == "ap":
        return float(trace[t][f.name]) - cfg.threshold(f.name)
    if op == "true":
        return cfg.rho_max
    if op == "false":
        return -cfg.rho_max
    if op == "not":
        return -qs_oracle(f.children[0], trace, cfg, t, end)
    if op in ("and", "or", "implies"):
        a = qs_oracle(f.children[0], trace, cfg, t, end)
        b = qs_oracle(f.children[1], trace, cfg, t, end)
        return {"and": min(a, b), "or": max(a, b), "implies": max(-a, b)}[op]
    if op == "X":
        if t + 1 >= end:
            raise Undefined
        return qs_oracle(f.children[0], trace, cfg, t + 1, end)
    if op == "G":
        return min(qs_oracle(f.children[0], trace, cfg, u, end) for u in range(t, end))
    if op == "F":
        return max(qs_oracle(f.children[0], trace, cfg, u, end) for u in range(t, end))
    if op == "U":
        lhs, rhs = f.children
        vals = []
        for u in range(t, end):
            pre = [qs_oracle(lhs, trace, cfg, w, u) for w in range(t, u)]
            vals.append(min(qs_oracle(rhs, trace, cfg, u, end), min(pre) if pre else cfg.rho_max))
        return max(vals)
    raise ValueError(op)


def bool_oracle(f: Formula, trace, cfg: QSConfig, t: int = 0, end: int | None = None) -> bool:
    """Finite-trace Boolean semantics on the same windows; atoms hold when ``f_x >= c_x``."""
    end = len(trace) if end is None else end
    op = f.op
    if op == "ap":
        return float(trace[t][f.name]) >= cfg.threshold(f.name)
    if op == "true":
        return True
    if op == "false":
        return False
    if op == "not":
        return not bool_oracle(f.children[0], trace, cfg, t, end)
    if op in ("and", "or", "implies"):
        a = bool_oracle(f.children[0], trace, cfg, t, end)
        b = bool_oracle(f.children[1], trace, cfg, t, end)
        return {"and": a and b, "or": a or b, "implies": (not a) or b}[op]
    if op == "X":
        if t + 1 >= end:
            raise Undefined
        return bool_oracle(f.children[0], trace, cfg, t + 1, end)
    if op == "G":
        return all([bool_oracle(f.children[0], trace, cfg, u, end) for u in range(t, end)])
    if op == "F":
        return any([bool_oracle(f.children[0], trace, cfg, u, end) for u in range(t, end)])
    if op == "U":
        lhs, rhs = f.children
        out = False
        for u in range(t, end):
            pre = all([bool_oracle(lhs, trace, cfg, w, u) for w in range(t, u)])
            out = out or (bool_oracle(rhs, trace, cfg, u, end) and pre)
        return out
    raise ValueError(op)


def random_formula(rng: np.random.Generator, aps, depth: int = 3) -> Formula:
    if depth == 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.08:
            return Formula("true")
        if r < 0.12:
            return Formula("false")
        return Formula("ap", name=str(rng.choice(aps)))
    op = str(rng.choice(["not", "and", "or", "implies", "X", "G", "F", "U"]))
    if op in ("not", "X", "G", "F"):
        return Formula(op, (random_formula(rng, aps, depth - 1),))
    return Formula(op, (random_formula(rng, aps, depth - 1), random_formula(rng, aps, depth - 1)))


def random_trace(rng: np.random.Generator, aps, n: int, scale: float = 1.0, grid: bool = True):
    """Robustness vectors; ``grid`` draws from a lattice so exact ties occur."""
    if grid:
        vals = rng.integers(-8, 9, size=(n, len(aps))) / 8.0 * scale
    else:
        vals = rng.uniform(-scale, scale, size=(n, len(aps)))
    return [dict(zip(aps, row.tolist())) for row in vals]


def all_letters(aps):
    return [frozenset(c) for k in range(len(aps) + 1) for c in itertools.combinations(aps, k)]


def mask_of(letter, aps) -> int:
    return letter_mask(letter, aps)


def random_batch(rng, net, n=4, clip=0.2, constant_input=False):
    obs = rng.normal(size=(n, net.obs_dim))
    if constant_input:
        obs[:] = obs[0]
    mask = rng.random((n, net.n_options)) < 0.7
    mask[:, 0] = True
    options = np.array([rng.choice(np.flatnonzero(m)) for m in mask])
    actions = rng.normal(size=(n, net.act_dim))
    batch = Batch(obs, actions, options, mask, np.zeros(n), rng.normal(size=n))
    logp, *_ = _log_prob_parts(net, batch)
    # shift old log-probs so some ratios clip, keeping clear of the kinks
    while True:
        shift = rng.normal(scale=0.3, size=n)
        ratio = np.exp(shift)
        if np.all(np.abs(ratio - (1 - clip)) > 1e-3) and np.all(np.abs(ratio - (1 + clip)) > 1e-3):
            break
    batch.logp_old = logp - shift
    return batch


def random_policy_fixture(rng, obs_dim, act_dim, n_options, hidden, n=4, margin=1e-3):
    """A small actor and batch whose ReLU pre-activations sit clear of zero.

    Central differences are meaningless across a kink, so parameters are
    redrawn until every hidden pre-activation is at least ``margin`` away.
    """
    from ltlcycler.learn import PolicyNet

    while True:
        net = PolicyNet(obs_dim, act_dim, n_options, hidden=hidden, rng=rng,
                        init_log_std=rng.uniform(-1, 0.5))
        p = net.params.p
        p["Wo"][:] = rng.normal(scale=0.5, size=p["Wo"].shape)
        p["b1"][:] = rng.normal(scale=0.3, size=hidden)
        p["b2"][:] = rng.normal(scale=0.3, size=hidden)
        batch = random_batch(rng, net, n=n)
        a1 = batch.obs @ p["W1"] + p["b1"]
        a2 = np.maximum(a1, 0) @ p["W2"] + p["b2"]
        if np.abs(a1).min() > margin and np.abs(a2).min() > margin:
            return net, batch
