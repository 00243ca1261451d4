"""Cycle Experience Replay reward shaping.

A trajectory is cut into segments at every visit to an accepting state (and
at its end). Within a segment every candidate path -- accepting initial paths
before the first accepting visit, accepting cycles afterwards -- is scored
retroactively, and the best-scoring candidate's per-step rewards are kept.

Two per-step scores are available:

* discrete: ``1/|c|`` for the first firing of an element of ``c`` since the
  last accepting visit;
* quantitative (``qs``): normalised robustness progress towards the guard of
  the element of ``c`` leaving the current automaton state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .automaton import LDBA
from .cycles import CyclePath, find_macs, find_maips
from .logic import DomainError, QSConfig, qs_eval_state
from .product import ProductTrajectory

__all__ = [
    "ShapingConfig",
    "Segment",
    "RewardTrace",
    "r_cycle",
    "r_qs_cycle",
    "cycler_assign",
    "shape_trajectory",
    "cycle_sets",
    "r_ltl_unshaped",
    "eventual_discount_weights",
    "eventual_discounted_value",
    "dual_reward",
    "lambda_bound",
    "gamma_phi_for",
]

DISCRETE = "discrete"
QS = "qs"


@dataclass(frozen=True)
class ShapingConfig:
    mode: str = DISCRETE
    qs: QSConfig | None = None
    clamp_negative_progress: bool = False
    tie_break: str = "lowest-index"

    def __post_init__(self):
        if self.mode not in (DISCRETE, QS):
            raise ValueError(f"unknown shaping mode {self.mode!r}")
        if (self.mode == QS) != (self.qs is not None):
            raise ValueError("a QSConfig is required in qs mode and only there")
        if self.tie_break != "lowest-index":
            raise ValueError("only lowest-index tie breaking is supported")


@dataclass(frozen=True)
class Segment:
    start: int  # first transition index
    stop: int  # one past the last transition index
    kind: str  # "MAIP" or "MAC"
    index: int | None  # chosen candidate, None when there were no candidates
    cycle: CyclePath | None
    total: float


@dataclass
class RewardTrace:
    r_cycler: np.ndarray
    r_ltl_unshaped: np.ndarray
    r_mdp: np.ndarray
    accepting_flags: np.ndarray
    segments: list[Segment]
    gamma: float = 0.98
    gamma_phi: float = 0.99
    lam: float = 1.0
    mode: str = DISCRETE
    r_exact: list[Fraction] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.r_cycler)

    def ltl_stream(self, shaped: bool = True) -> np.ndarray:
        return self.r_cycler if shaped else self.r_ltl_unshaped

    def dual(self, shaped: bool = True, inclusive: bool = True) -> np.ndarray:
        """Per-step dual reward ``gamma^t r_mdp + Gamma_t * lam * r_ltl``."""
        weights = eventual_discount_weights(self.accepting_flags, self.gamma_phi, inclusive)
        t = np.arange(len(self))
        return self.gamma ** t * self.r_mdp + weights * self.lam * self.ltl_stream(shaped)

    def to_records(self) -> list[dict]:
        w = eventual_discount_weights(self.accepting_flags, self.gamma_phi)
        dual = self.dual()
        return [
            {
                "t": t,
                "r_cycler": float(self.r_cycler[t]),
                "r_ltl": int(self.r_ltl_unshaped[t]),
                "r_mdp": float(self.r_mdp[t]),
                "accepting": bool(self.accepting_flags[t]),
                "Gamma": float(w[t]),
                "r_dual": float(dual[t]),
            }
            for t in range(len(self))
        ]


# --------------------------------------------------------------------------
# per-step scores


def r_cycle(fired_edge: int, e: np.ndarray, c: CyclePath, exact: bool = False):
    """``1/|c|`` if the fired element lies on ``c`` and is not yet in the frontier."""
    hit = fired_edge in c.elements and not e[fired_edge]
    if exact:
        return Fraction(1, len(c)) if hit else Fraction(0)
    return 1.0 / len(c) if hit else 0.0


def _clipped(value: float, cfg: QSConfig) -> float:
    return min(max(value, cfg.rho_min), cfg.rho_max)


def r_qs_cycle(s_rv: Mapping[str, float], b: int, s_next_rv: Mapping[str, float], b_next: int,
               fired_edge: int, e: np.ndarray, c: CyclePath, ldba: LDBA, cfg: QSConfig,
               clamp_negative_progress: bool = False) -> float:
    """Normalised robustness progress towards the element of ``c`` leaving ``b``.

    Paid when that element fires for the first time in the segment, or when
    the automaton stays at ``b``. Robustness is clipped to
    ``[rho_min, rho_max]``. Jump elements have no guard and pay ``1/|c|``
    when they fire.
    """
    parent = c.parent_map(ldba)
    if b not in parent:
        return 0.0
    el = parent[b]
    fires = fired_edge == el and not e[el]
    stays = b_next == b
    if not (fires or stays):
        return 0.0
    if ldba.is_eps(el):
        return 1.0 / len(c) if fires else 0.0
    guard = ldba.edges[el].guard
    before = _clipped(qs_eval_state(guard, s_rv, cfg), cfg)
    after = _clipped(qs_eval_state(guard, s_next_rv, cfg), cfg)
    delta = after - before
    if clamp_negative_progress:
        delta = max(delta, 0.0)
    return delta / (cfg.span * len(c))


# --------------------------------------------------------------------------
# Alg. driver


def cycle_sets(ldba: LDBA, b0: int) -> tuple[list[CyclePath], list[CyclePath]]:
    """MAIPs rooted at ``b0`` and all MACs, memoised on the automaton."""
    key = ("cycles", b0)
    if key not in ldba._tables:
        ldba._tables[key] = (find_maips(ldba, start=b0), find_macs(ldba))
    return ldba._tables[key]


def cycler_assign(traj: ProductTrajectory, maips: Sequence[CyclePath], macs: Sequence[CyclePath],
                  ldba: LDBA, cfg: ShapingConfig | None = None, *, gamma: float = 0.98,
                  gamma_phi: float = 0.99, lam: float = 1.0) -> RewardTrace:
    """Shape the LTL reward of ``traj`` (one value per transition).

    In qs mode the trajectory must carry per-state robustness vectors
    (``traj.robustness``). Progress at an automaton state is measured from
    the last state at which that candidate was credited there, so repeated
    visits to one state telescope instead of accumulating.
    """
    cfg = cfg or ShapingConfig()
    T = traj.horizon
    if T < 1:
        raise ValueError("trajectory has no transitions")
    b_seq = traj.automaton_states
    edges = traj.edges
    qs = cfg.mode == QS
    if qs and traj.robustness is None:
        raise DomainError("qs shaping needs robustness vectors on the trajectory")
    rvs = traj.robustness

    r = np.zeros(T)
    r_exact = [Fraction(0)] * T if not qs else None
    flags = np.array([b_seq[t + 1] in ldba.accepting for t in range(T)])
    segments: list[Segment] = []

    e = np.zeros(ldba.num_elements, dtype=np.int8)
    j = 0
    first = True
    cands = maips
    R = np.zeros((len(cands), T))
    hits = np.zeros((len(cands), T), dtype=bool)
    anchors: list[dict[int, Mapping[str, float]]] = [{} for _ in cands]
    for t in range(T):
        b, b_next, fired = b_seq[t], b_seq[t + 1], edges[t]
        for i, c in enumerate(cands):
            if qs:
                parent = c.parent_map(ldba)
                if b not in parent:
                    continue
                anchor = anchors[i].setdefault(b, rvs[t])
                val = r_qs_cycle(anchor, b, rvs[t + 1], b_next, fired, e, c, ldba, cfg.qs,
                                 cfg.clamp_negative_progress)
                el = parent[b]
                if (fired == el and not e[el]) or b_next == b:
                    anchors[i][b] = rvs[t + 1]
                R[i, t] = val
            else:
                if fired in c.elements and not e[fired]:
                    hits[i, t] = True
                    R[i, t] = 1.0 / len(c)
        e[fired] = 1
        if b_next in ldba.accepting or t == T - 1:
            kind = "MAIP" if first else "MAC"
            if len(cands):
                if qs:
                    totals = [math.fsum(R[i, j:t + 1]) for i in range(len(cands))]
                else:
                    totals = [Fraction(int(hits[i, j:t + 1].sum()), len(c)) for i, c in enumerate(cands)]
                best = max(range(len(cands)), key=lambda i: (totals[i], -i))
                r[j:t + 1] = R[best, j:t + 1]
                if not qs:
                    unit = Fraction(1, len(cands[best]))
                    for k in range(j, t + 1):
                        r_exact[k] = unit if hits[best, k] else Fraction(0)
                segments.append(Segment(j, t + 1, kind, best, cands[best], float(totals[best])))
            else:
                segments.append(Segment(j, t + 1, kind, None, None, 0.0))
            j = t + 1
            e[:] = 0
            if b_next in ldba.accepting:
                first = False
            cands = maips if first else macs
            R = np.zeros((len(cands), T))
            hits = np.zeros((len(cands), T), dtype=bool)
            anchors = [{} for _ in cands]

    return RewardTrace(
        r_cycler=r,
        r_ltl_unshaped=flags.astype(int),
        r_mdp=traj.r_mdp,
        accepting_flags=flags,
        segments=segments,
        gamma=gamma,
        gamma_phi=gamma_phi,
        lam=lam,
        mode=cfg.mode,
        r_exact=r_exact,
    )


def shape_trajectory(traj: ProductTrajectory, ldba: LDBA, cfg: ShapingConfig | None = None,
                     **kw) -> RewardTrace:
    """:func:`cycler_assign` with MAIPs rooted at the trajectory's first automaton state."""
    maips, macs = cycle_sets(ldba, traj.automaton_states[0])
    return cycler_assign(traj, maips, macs, ldba, cfg, **kw)


# --------------------------------------------------------------------------
# objective pieces


def r_ltl_unshaped(b: int, accepting) -> int:
    return 1 if b in accepting else 0


def eventual_discount_weights(flags, gamma_phi: float, inclusive: bool = True) -> np.ndarray:
    """``Gamma_t = gamma_phi ** j_t`` where ``j_t`` counts accepting visits so far.

    ``inclusive`` counts a visit at step ``t`` itself.
    """
    flags = np.asarray(flags, dtype=np.int64)
    j = np.cumsum(flags)
    if not inclusive:
        j = j - flags
    return np.power(float(gamma_phi), j)


def eventual_discounted_value(rt: RewardTrace, shaped: bool = True, inclusive: bool = True) -> float:
    if not 0.0 < rt.gamma_phi < 1.0:
        raise DomainError("gamma_phi must lie in (0, 1)")
    w = eventual_discount_weights(rt.accepting_flags, rt.gamma_phi, inclusive)
    return float(math.fsum(w * rt.ltl_stream(shaped)))


def dual_reward(t: int, r_mdp: float, big_gamma: float, r_ltl: float, gamma: float, lam: float) -> float:
    return gamma ** t * r_mdp + big_gamma * lam * r_ltl


def lambda_bound(r_max: float, r_min: float, epsilon: float, gamma: float) -> float:
    """Lagrange weight above which the dual optimum respects the LTL constraint."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    if not 0.0 < gamma < 1.0:
        raise DomainError("gamma must lie in (0, 1)")
    if r_max < r_min:
        raise DomainError("r_max must be at least r_min")
    return (r_max - r_min) / (epsilon * (1.0 - gamma))


def gamma_phi_for(epsilon: float, m: int) -> float:
    """Smallest LTL discount keeping the proxy within ``epsilon`` of satisfaction probability."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie in (0, 1)")
    if m < 0:
        raise DomainError("M must be non-negative")
    return (1.0 - epsilon) ** (1.0 / (m + 1))
