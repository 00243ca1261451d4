"""Limit-deterministic Büchi automata: the ``ldba v1`` text format and stepping.

Guard edges and epsilon ("jump") edges share one index space, the *element*
ids: guard edge ``i`` is element ``i`` and epsilon edge ``k`` is element
``len(edges) + k``. Cycles, frontiers and trajectories all refer to elements.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

import numpy as np

from .logic import (
    DomainError,
    Formula,
    LTLSyntaxError,
    UnknownAtomError,
    format_formula,
    is_temporal_free,
    parse_ltl,
)

__all__ = [
    "Edge",
    "EpsEdge",
    "LDBA",
    "LDBAFormatError",
    "LDBAValidationError",
    "IncompleteAutomatonError",
    "parse_ldba",
    "serialize_ldba",
    "load_ldba",
    "load_flatworld_ldba",
    "step",
    "jump",
    "initial_transition",
    "letter_mask",
    "mask_letter",
]

MAX_APS = 16


class LDBAFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class LDBAValidationError(ValueError):
    """A structural rule of limit-deterministic automata is violated."""

    def __init__(self, message: str, state: int | None = None, letter: frozenset | None = None):
        super().__init__(message)
        self.state = state
        self.letter = letter


class IncompleteAutomatonError(DomainError):
    pass


@dataclass(frozen=True)
class Edge:
    id: int
    src: int
    guard: Formula
    dst: int


@dataclass(frozen=True)
class EpsEdge:
    id: int  # element id, offset by the number of guard edges
    src: int
    jump_id: str
    dst: int


def letter_mask(letter: Iterable[str], aps: tuple[str, ...]) -> int:
    index = {a: i for i, a in enumerate(aps)}
    m = 0
    for p in letter:
        if p not in index:
            raise UnknownAtomError(p)
        m |= 1 << index[p]
    return m


def mask_letter(mask: int, aps: tuple[str, ...]) -> frozenset[str]:
    return frozenset(a for i, a in enumerate(aps) if mask >> i & 1)


def _guard_table(guard: Formula, aps: tuple[str, ...]) -> np.ndarray:
    """Boolean vector over all ``2**len(aps)`` letters, indexed by letter mask."""
    masks = np.arange(1 << len(aps), dtype=np.int64)
    index = {a: i for i, a in enumerate(aps)}

    def ev(f: Formula) -> np.ndarray:
        op = f.op
        if op == "ap":
            return (masks >> index[f.name]) & 1 == 1
        if op == "true":
            return np.ones(masks.shape, bool)
        if op == "false":
            return np.zeros(masks.shape, bool)
        if op == "not":
            return ~ev(f.children[0])
        a, b = ev(f.children[0]), ev(f.children[1])
        if op == "and":
            return a & b
        if op == "or":
            return a | b
        if op == "implies":
            return ~a | b
        raise DomainError(f"temporal operator {op} in a guard")

    return ev(guard)


@dataclass(frozen=True, eq=False)
class LDBA:
    aps: tuple[str, ...]
    num_states: int
    initial: int
    accepting: frozenset[int]
    edges: tuple[Edge, ...]
    eps_edges: tuple[EpsEdge, ...] = ()
    nondet: frozenset[int] = frozenset()
    sink: int | None = None
    declared_states: int | None = None
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_elements(self) -> int:
        return len(self.edges) + len(self.eps_edges)

    def element(self, i: int) -> Edge | EpsEdge:
        if i < len(self.edges):
            return self.edges[i]
        return self.eps_edges[i - len(self.edges)]

    def elements(self) -> list[Edge | EpsEdge]:
        return list(self.edges) + list(self.eps_edges)

    def is_eps(self, i: int) -> bool:
        return i >= len(self.edges)

    def out_elements(self, b: int) -> list[int]:
        """Element ids leaving ``b`` in id order."""
        return self._outgoing()[b]

    def _outgoing(self) -> list[list[int]]:
        if "out" not in self._tables:
            out: list[list[int]] = [[] for _ in range(self.num_states)]
            for el in self.elements():
                out[el.src].append(el.id)
            self._tables["out"] = out
        return self._tables["out"]

    def guard_table(self, edge_id: int) -> np.ndarray:
        key = ("guard", edge_id)
        if key not in self._tables:
            self._tables[key] = _guard_table(self.edges[edge_id].guard, self.aps)
        return self._tables[key]

    def transition_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``next_state[b, mask]`` and ``fired[b, mask]``.

        Entries are ``-1`` where no guard matches, ``-2`` where several do.
        """
        if "trans" not in self._tables:
            n_letters = 1 << len(self.aps)
            nxt = np.full((self.num_states, n_letters), -1, dtype=np.int64)
            fired = np.full((self.num_states, n_letters), -1, dtype=np.int64)
            for e in self.edges:
                hit = self.guard_table(e.id)
                clash = hit & (fired[e.src] != -1)
                fresh = hit & (fired[e.src] == -1)
                nxt[e.src, fresh] = e.dst
                fired[e.src, fresh] = e.id
                nxt[e.src, clash] = -2
                fired[e.src, clash] = -2
            self._tables["trans"] = (nxt, fired)
        return self._tables["trans"]

    def jumps_at(self, b: int) -> list[EpsEdge]:
        return [e for e in self.eps_edges if e.src == b]

    def jump_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.eps_edges:
            seen.setdefault(e.jump_id, None)
        return list(seen)

    def describe(self, element_id: int) -> str:
        el = self.element(element_id)
        if isinstance(el, EpsEdge):
            return f"({el.src}, eps:{el.jump_id}, {el.dst})"
        return f"({el.src}, {format_formula(el.guard)}, {el.dst})"

    def structure(self) -> tuple:
        """Hashable structural summary, used for round-trip comparisons."""
        return (
            self.aps,
            self.num_states,
            self.initial,
            tuple(sorted(self.accepting)),
            tuple(sorted(self.nondet)),
            tuple((e.src, format_formula(e.guard), e.dst) for e in self.edges),
            tuple((e.src, e.jump_id, e.dst) for e in self.eps_edges),
        )


# --------------------------------------------------------------------------
# validation


def _validate(ldba: LDBA, allow_partial: bool) -> LDBA:
    n = ldba.num_states
    if len(ldba.aps) > MAX_APS:
        raise LDBAValidationError(f"at most {MAX_APS} propositions are supported")
    if not 0 <= ldba.initial < n:
        raise LDBAValidationError(f"initial state {ldba.initial} out of range", ldba.initial)
    for s in ldba.accepting | ldba.nondet:
        if not 0 <= s < n:
            raise LDBAValidationError(f"state {s} out of range", s)
    for e in ldba.elements():
        for s in (e.src, e.dst):
            if not 0 <= s < n:
                raise LDBAValidationError(f"state {s} out of range", s)
    bad = ldba.accepting & ldba.nondet
    if bad:
        s = min(bad)
        raise LDBAValidationError(f"accepting state {s} lies in the nondeterministic component", s)
    for e in ldba.edges:
        if not is_temporal_free(e.guard):
            raise LDBAValidationError(f"edge {e.id} guard contains a temporal operator", e.src)
        if e.src not in ldba.nondet and e.dst in ldba.nondet:
            raise LDBAValidationError(
                f"edge {e.id} leaves the deterministic component ({e.src} -> {e.dst})", e.src
            )
    for e in ldba.eps_edges:
        if e.src not in ldba.nondet:
            raise LDBAValidationError(
                f"epsilon edge from state {e.src}, which is not nondeterministic", e.src
            )

    n_letters = 1 << len(ldba.aps)
    counts = np.zeros((n, n_letters), dtype=np.int64)
    for e in ldba.edges:
        counts[e.src] += ldba.guard_table(e.id)
    for s in range(n):
        if s in ldba.nondet:
            continue
        over = np.flatnonzero(counts[s] > 1)
        if over.size:
            letter = mask_letter(int(over[0]), ldba.aps)
            raise LDBAValidationError(
                f"state {s} is deterministic but several edges match letter {_fmt_letter(letter)}",
                s, letter,
            )

    missing = counts == 0
    if not missing.any():
        return ldba
    need = [s for s in range(n) if missing[s].any()]
    if not allow_partial:
        det_gaps = [s for s in need if s not in ldba.nondet]
        if det_gaps:
            s = det_gaps[0]
            letter = mask_letter(int(np.flatnonzero(missing[s])[0]), ldba.aps)
            raise LDBAValidationError(
                f"state {s} has no edge for letter {_fmt_letter(letter)} "
                "(use allow_partial to route it to a sink)",
                s, letter,
            )
        return ldba
    return _with_sink(ldba, need)


def _with_sink(ldba: LDBA, need: list[int]) -> LDBA:
    sink = ldba.num_states
    edges = list(ldba.edges)
    for s in need:
        guards = [e.guard for e in ldba.edges if e.src == s]
        if guards:
            cover = guards[0]
            for g in guards[1:]:
                cover = Formula("or", (cover, g))
            guard = Formula("not", (cover,))
        else:
            guard = Formula("true")
        edges.append(Edge(len(edges), s, guard, sink))
    edges.append(Edge(len(edges), sink, Formula("true"), sink))
    offset = len(edges)
    eps = tuple(EpsEdge(offset + k, e.src, e.jump_id, e.dst) for k, e in enumerate(ldba.eps_edges))
    return LDBA(
        aps=ldba.aps,
        num_states=ldba.num_states + 1,
        initial=ldba.initial,
        accepting=ldba.accepting,
        edges=tuple(edges),
        eps_edges=eps,
        nondet=ldba.nondet,
        sink=sink,
        declared_states=ldba.declared_states,
    )


def _fmt_letter(letter: frozenset) -> str:
    return "{" + ", ".join(sorted(letter)) + "}"


# --------------------------------------------------------------------------
# text format


def _state_list(text: str, line: int) -> list[int]:
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise LDBAFormatError(f"expected state ids, got {text!r}", line) from None


def _arrow(rest: str, line: int) -> tuple[int, int, str]:
    head, sep, tail = rest.partition(":")
    if not sep:
        raise LDBAFormatError("expected '<src> -> <dst> : <label>'", line)
    src, arrow, dst = head.partition("->")
    if not arrow:
        raise LDBAFormatError("expected '->'", line)
    try:
        return int(src), int(dst), tail.strip()
    except ValueError:
        raise LDBAFormatError("state ids must be integers", line) from None


def parse_ldba(text: str, allow_partial: bool = False) -> LDBA:
    """Parse and validate an automaton in the ``ldba v1`` format.

    With ``allow_partial`` a fresh absorbing, non-accepting sink state is
    appended and every letter left unmatched by a state's edges is routed to
    it. Without it, a deterministic state missing some letter is an error.
    """
    lines = text.splitlines()
    header = None
    fields: dict[str, tuple[str, int]] = {}
    raw_edges: list[tuple[int, int, str, int]] = []
    raw_eps: list[tuple[int, int, str, int]] = []
    for no, raw in enumerate(lines, start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if header is None:
            if body.split() != ["ldba", "v1"]:
                raise LDBAFormatError("first line must be 'ldba v1'", no)
            header = no
            continue
        key, sep, rest = body.partition(":")
        key = key.strip()
        if not sep:
            raise LDBAFormatError(f"expected 'key: value', got {body!r}", no)
        if key == "edge":
            raw_edges.append((*_arrow(rest, no), no))
        elif key == "eps":
            raw_eps.append((*_arrow(rest, no), no))
        elif key in ("aps", "states", "initial", "nondet", "accepting"):
            if key in fields:
                raise LDBAFormatError(f"duplicate field {key!r}", no)
            fields[key] = (rest.strip(), no)
        else:
            raise LDBAFormatError(f"unknown field {key!r}", no)
    if header is None:
        raise LDBAFormatError("missing 'ldba v1' header", 1)
    for key in ("aps", "states", "initial", "accepting"):
        if key not in fields:
            raise LDBAFormatError(f"missing field {key!r}", len(lines))

    aps = tuple(fields["aps"][0].split())
    if len(set(aps)) != len(aps):
        raise LDBAFormatError("duplicate proposition", fields["aps"][1])
    states = _state_list(*fields["states"])
    initial = _state_list(*fields["initial"])
    if len(states) != 1 or len(initial) != 1:
        raise LDBAFormatError("'states' and 'initial' take one integer", fields["states"][1])
    n = states[0]
    if n < 1:
        raise LDBAFormatError("an automaton needs at least one state", fields["states"][1])
    accepting = frozenset(_state_list(*fields["accepting"]))
    nondet = frozenset(_state_list(*fields["nondet"])) if "nondet" in fields else frozenset()

    edges = []
    for src, dst, label, no in raw_edges:
        try:
            guard = parse_ltl(label, aps)
        except (LTLSyntaxError, UnknownAtomError) as exc:
            raise LDBAFormatError(f"bad guard: {exc}", no) from None
        edges.append(Edge(len(edges), src, guard, dst))
    eps = []
    for src, dst, label, no in raw_eps:
        if not label or len(label.split()) != 1:
            raise LDBAFormatError("epsilon edges need a single jump identifier", no)
        eps.append(EpsEdge(len(edges) + len(eps), src, label, dst))
    keys = [(e.src, e.jump_id) for e in eps]
    if len(set(keys)) != len(keys):
        raise LDBAFormatError("duplicate jump identifier at one state", raw_eps[0][3])

    ldba = LDBA(
        aps=aps,
        num_states=n,
        initial=initial[0],
        accepting=accepting,
        edges=tuple(edges),
        eps_edges=tuple(eps),
        nondet=nondet,
        declared_states=n,
    )
    return _validate(ldba, allow_partial)


def serialize_ldba(ldba: LDBA) -> str:
    lines = [
        "ldba v1",
        "aps: " + " ".join(ldba.aps),
        f"states: {ldba.num_states}",
        f"initial: {ldba.initial}",
        "nondet: " + " ".join(str(s) for s in sorted(ldba.nondet)),
        "accepting: " + " ".join(str(s) for s in sorted(ldba.accepting)),
    ]
    for e in ldba.edges:
        lines.append(f"edge: {e.src} -> {e.dst} : {format_formula(e.guard)}")
    for e in ldba.eps_edges:
        lines.append(f"eps: {e.src} -> {e.dst} : {e.jump_id}")
    return "\n".join(lines) + "\n"


def load_ldba(path, allow_partial: bool = False) -> LDBA:
    with open(path, encoding="utf-8") as fh:
        return parse_ldba(fh.read(), allow_partial=allow_partial)


@functools.lru_cache(maxsize=None)
def load_flatworld_ldba() -> LDBA:
    """Bundled automaton for ``G(F(r) & F(g) & F(y)) & G(!b)``.

    The file omits the blue-violation letters, so it is loaded with a
    synthesized sink.
    """
    text = resources.files("ltlcycler.data").joinpath("flatworld.ldba").read_text("utf-8")
    return parse_ldba(text, allow_partial=True)


# --------------------------------------------------------------------------
# stepping


def step(ldba: LDBA, b: int, letter: Iterable[str]) -> tuple[int, int]:
    """Successor of ``b`` under ``letter`` and the id of the edge that fired."""
    mask = letter_mask(letter, ldba.aps)
    nxt, fired = ldba.transition_table()
    e = int(fired[b, mask])
    if e == -1:
        raise IncompleteAutomatonError(
            f"incomplete automaton: no edge from {b} on {_fmt_letter(mask_letter(mask, ldba.aps))}"
        )
    if e == -2:
        raise DomainError(
            f"state {b} has several edges for {_fmt_letter(mask_letter(mask, ldba.aps))}; "
            "leave the nondeterministic component with a jump"
        )
    return int(nxt[b, mask]), e


def jump(ldba: LDBA, b: int, jump_id: str) -> int:
    return jump_edge(ldba, b, jump_id).dst


def jump_edge(ldba: LDBA, b: int, jump_id: str) -> EpsEdge:
    for e in ldba.eps_edges:
        if e.src == b and e.jump_id == jump_id:
            return e
    raise DomainError(f"no jump {jump_id!r} at state {b}")


def initial_transition(ldba: LDBA, letter: Iterable[str]) -> tuple[int, int]:
    return step(ldba, ldba.initial, letter)
