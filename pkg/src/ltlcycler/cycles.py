"""Minimal accepting initial paths (MAIPs) and minimal accepting cycles (MACs).

Both are enumerated by depth-first search with backtracking: from a start
state, follow every outgoing element; reaching any accepting state records
the path, otherwise the search descends into states not already on the
current path. Results are sorted by their element-id sequence.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable

from .automaton import LDBA

__all__ = ["CyclePath", "find_maips", "find_macs", "brute_force_paths", "MAIP", "MAC"]

MAIP = "MAIP"
MAC = "MAC"
BRUTE_FORCE_MAX_STATES = 10


@dataclass(frozen=True)
class CyclePath:
    kind: str
    elements: tuple[int, ...]
    start: int
    end: int

    def __len__(self) -> int:
        return len(self.elements)

    def __contains__(self, element_id: int) -> bool:
        return element_id in self.elements

    def states(self, ldba: LDBA) -> list[int]:
        return [self.start] + [ldba.element(e).dst for e in self.elements]

    def parent_map(self, ldba: LDBA) -> dict[int, int]:
        """Map each source state on the path to the element leaving it."""
        return {ldba.element(e).src: e for e in self.elements}

    def describe(self, ldba: LDBA) -> str:
        return "{" + ", ".join(ldba.describe(e) for e in self.elements) + "}"


def _dfs(ldba: LDBA, start: int, kind: str) -> list[CyclePath]:
    found: list[CyclePath] = []
    visited: set[int] = set()
    path: list[int] = []

    def visit(b: int) -> None:
        visited.add(b)
        for el_id in ldba.out_elements(b):
            nxt = ldba.element(el_id).dst
            if nxt in ldba.accepting:
                found.append(CyclePath(kind, tuple(path) + (el_id,), start, nxt))
            elif nxt not in visited:
                path.append(el_id)
                visit(nxt)
                path.pop()
        visited.discard(b)

    visit(start)
    return found


def _sorted(paths: Iterable[CyclePath]) -> list[CyclePath]:
    return sorted(paths, key=lambda c: c.elements)


def find_maips(ldba: LDBA, start: int | None = None) -> list[CyclePath]:
    """All minimal accepting initial paths.

    ``start`` defaults to the automaton's initial state. Passing the first
    state of a trajectory roots the paths there instead, which is what the
    shaping pass uses once the initial label has been read.
    """
    root = ldba.initial if start is None else start
    return _sorted(_dfs(ldba, root, MAIP))


def find_macs(ldba: LDBA) -> list[CyclePath]:
    """All minimal accepting cycles, searched from every accepting state."""
    out: list[CyclePath] = []
    for acc in sorted(ldba.accepting):
        out.extend(_dfs(ldba, acc, MAC))
    return _sorted(out)


def brute_force_paths(ldba: LDBA, sources: Iterable[int], kind: str | None = None) -> list[CyclePath]:
    """Exhaustive enumeration of minimal accepting paths from ``sources``.

    Every ordered selection of distinct, non-accepting intermediate states is
    tried, combined with every choice of parallel element between consecutive
    states. Independent of the search order used by :func:`find_maips`.
    """
    if ldba.num_states > BRUTE_FORCE_MAX_STATES:
        raise ValueError(
            f"brute force is limited to {BRUTE_FORCE_MAX_STATES} states, got {ldba.num_states}"
        )
    between: dict[tuple[int, int], list[int]] = {}
    for el in ldba.elements():
        between.setdefault((el.src, el.dst), []).append(el.id)
    accepting = sorted(ldba.accepting)
    out = set()
    for src in sources:
        k = kind or (MAC if src in ldba.accepting else MAIP)
        middle_pool = [s for s in range(ldba.num_states) if s not in ldba.accepting and s != src]
        for size in range(len(middle_pool) + 1):
            for middle in itertools.permutations(middle_pool, size):
                for end in accepting:
                    nodes = (src,) + middle + (end,)
                    choices = [between.get((u, v), []) for u, v in zip(nodes, nodes[1:])]
                    if not all(choices):
                        continue
                    for combo in itertools.product(*choices):
                        out.add(CyclePath(k, tuple(combo), src, end))
    return _sorted(out)
