"""LTL formulas: parsing, Boolean evaluation of guards, and quantitative semantics.

Grammar (loosest binding first)::

    phi := phi -> phi          (right associative)
         | phi '|' phi
         | phi & phi
         | phi U phi           (right associative)
         | !phi | X(phi) | G(phi) | F(phi)
         | ap | true | false | (phi)

Robustness of an atom ``x`` at a state is ``f_x(s) - c_x``, so a positive value
means the atom holds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Formula",
    "QSConfig",
    "LTLSyntaxError",
    "UnknownAtomError",
    "DomainError",
    "parse_ltl",
    "format_formula",
    "atom",
    "qs_eval",
    "qs_eval_state",
    "bool_eval",
    "is_temporal_free",
]

TEMPORAL_OPS = frozenset({"X", "G", "F", "U"})
_ARITY = {
    "ap": 0, "true": 0, "false": 0,
    "not": 1, "X": 1, "G": 1, "F": 1,
    "and": 2, "or": 2, "implies": 2, "U": 2,
}
_KEYWORDS = {"true", "false", "X", "G", "F", "U"}


class LTLSyntaxError(ValueError):
    """Malformed formula text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownAtomError(ValueError):
    def __init__(self, name: str):
        super().__init__(f"unknown atomic proposition {name!r}")
        self.name = name


class DomainError(ValueError):
    """Operation undefined for its input (e.g. X at the last trace position)."""


@dataclass(frozen=True)
class Formula:
    op: str
    children: tuple["Formula", ...] = ()
    name: str | None = None

    def __post_init__(self):
        if self.op not in _ARITY:
            raise ValueError(f"unknown operator {self.op!r}")
        if len(self.children) != _ARITY[self.op]:
            raise ValueError(f"{self.op} takes {_ARITY[self.op]} operands")
        if (self.op == "ap") != (self.name is not None):
            raise ValueError("only atoms carry a name")

    def atoms(self) -> frozenset[str]:
        if self.op == "ap":
            return frozenset([self.name])
        out: frozenset[str] = frozenset()
        for c in self.children:
            out |= c.atoms()
        return out

    def __str__(self) -> str:
        return format_formula(self)

    # small constructors keep fixtures readable
    def __and__(self, other: "Formula") -> "Formula":
        return Formula("and", (self, other))

    def __or__(self, other: "Formula") -> "Formula":
        return Formula("or", (self, other))

    def __invert__(self) -> "Formula":
        return Formula("not", (self,))


TRUE = Formula("true")
FALSE = Formula("false")


def atom(name: str) -> Formula:
    return Formula("ap", name=name)


@dataclass(frozen=True)
class QSConfig:
    rho_max: float
    rho_min: float
    thresholds: Mapping[str, float]

    def __post_init__(self):
        if not self.rho_min < self.rho_max:
            raise ValueError("rho_min must be below rho_max")
        for name, c in self.thresholds.items():
            if not self.rho_min <= c <= self.rho_max:
                raise ValueError(f"threshold for {name!r} outside [rho_min, rho_max]")

    @property
    def span(self) -> float:
        return self.rho_max - self.rho_min

    def threshold(self, name: str) -> float:
        return float(self.thresholds.get(name, 0.0))


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s*(?:(->)|([!&|()])|([A-Za-z_][A-Za-z0-9_]*))")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            stripped = len(text[pos:]) - len(text[pos:].lstrip())
            if pos + stripped >= n:
                break
            raise LTLSyntaxError(f"unexpected character {text[pos + stripped]!r}", pos + stripped)
        tok = m.group(1) or m.group(2) or m.group(3)
        tokens.append((tok, m.start(m.lastindex)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, ap_set: Iterable[str] | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.aps = None if ap_set is None else set(ap_set)

    def peek(self) -> str | None:
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def offset(self) -> int:
        if self.i < len(self.tokens):
            return self.tokens[self.i][1]
        return len(self.text)

    def expect(self, tok: str) -> None:
        if self.peek() != tok:
            found = self.peek()
            what = "end of input" if found is None else repr(found)
            raise LTLSyntaxError(f"expected {tok!r}, found {what}", self.offset())
        self.i += 1

    def parse(self) -> Formula:
        f = self.implies()
        if self.peek() is not None:
            raise LTLSyntaxError(f"unexpected token {self.peek()!r}", self.offset())
        return f

    def implies(self) -> Formula:
        left = self.disj()
        if self.peek() == "->":
            self.i += 1
            return Formula("implies", (left, self.implies()))
        return left

    def disj(self) -> Formula:
        left = self.conj()
        while self.peek() == "|":
            self.i += 1
            left = Formula("or", (left, self.conj()))
        return left

    def conj(self) -> Formula:
        left = self.until()
        while self.peek() == "&":
            self.i += 1
            left = Formula("and", (left, self.until()))
        return left

    def until(self) -> Formula:
        left = self.unary()
        if self.peek() == "U":
            self.i += 1
            return Formula("U", (left, self.until()))
        return left

    def unary(self) -> Formula:
        tok = self.peek()
        if tok is None:
            raise LTLSyntaxError("unexpected end of input", self.offset())
        if tok == "!":
            self.i += 1
            return Formula("not", (self.unary(),))
        if tok in ("X", "G", "F"):
            self.i += 1
            self.expect("(")
            inner = self.implies()
            self.expect(")")
            return Formula(tok, (inner,))
        if tok == "(":
            self.i += 1
            inner = self.implies()
            self.expect(")")
            return inner
        if tok in ("true", "false"):
            self.i += 1
            return Formula(tok)
        if tok[0].isalpha() or tok[0] == "_":
            if tok in _KEYWORDS:
                raise LTLSyntaxError(f"unexpected keyword {tok!r}", self.offset())
            if self.aps is not None and tok not in self.aps:
                raise UnknownAtomError(tok)
            self.i += 1
            return atom(tok)
        raise LTLSyntaxError(f"unexpected token {tok!r}", self.offset())


def parse_ltl(text: str, ap_set: Iterable[str] | None = None) -> Formula:
    """Parse ``text`` into a :class:`Formula`.

    Parameters
    ----------
    text : str
        Formula in the ASCII grammar of this module.
    ap_set : iterable of str, optional
        Declared propositions. Any other identifier raises
        :class:`UnknownAtomError`. ``None`` accepts every identifier.
    """
    if not text or not text.strip():
        raise LTLSyntaxError("empty formula", 0)
    return _Parser(text, ap_set).parse()


_PREC = {"implies": 1, "or": 2, "and": 3, "U": 4}


def format_formula(f: Formula, parent_prec: int = 0) -> str:
    """Render ``f`` in the concrete grammar; reparsing gives back ``f``."""
    op = f.op
    if op == "ap":
        return f.name
    if op in ("true", "false"):
        return op
    if op == "not":
        return "!" + format_formula(f.children[0], 5)
    if op in ("X", "G", "F"):
        return f"{op}({format_formula(f.children[0])})"
    prec = _PREC[op]
    sym = {"implies": "->", "or": "|", "and": "&", "U": "U"}[op]
    left, right = f.children
    if op in ("implies", "U"):
        # right associative
        s = f"{format_formula(left, prec + 1)} {sym} {format_formula(right, prec)}"
    else:
        s = f"{format_formula(left, prec)} {sym} {format_formula(right, prec + 1)}"
    return f"({s})" if prec < parent_prec else s


def is_temporal_free(f: Formula) -> bool:
    if f.op in TEMPORAL_OPS:
        return False
    return all(is_temporal_free(c) for c in f.children)


# --------------------------------------------------------------------------
# Boolean and quantitative evaluation


def bool_eval(guard: Formula, letter: Iterable[str]) -> bool:
    """Truth value of a temporal-free ``guard`` under ``letter`` (the true atoms)."""
    letter = letter if isinstance(letter, (set, frozenset)) else set(letter)
    return _bool(guard, letter)


def _bool(f: Formula, letter) -> bool:
    op = f.op
    if op == "ap":
        return f.name in letter
    if op == "true":
        return True
    if op == "false":
        return False
    if op == "not":
        return not _bool(f.children[0], letter)
    if op == "and":
        return _bool(f.children[0], letter) and _bool(f.children[1], letter)
    if op == "or":
        return _bool(f.children[0], letter) or _bool(f.children[1], letter)
    if op == "implies":
        return (not _bool(f.children[0], letter)) or _bool(f.children[1], letter)
    raise DomainError(f"temporal operator {op} in a state formula")


def qs_eval_state(guard: Formula, rv: Mapping[str, float], cfg: QSConfig) -> float:
    """Robustness of a temporal-free ``guard`` at one state.

    ``rv`` maps each proposition to its robustness measure ``f_x(s)``.
    """
    op = guard.op
    if op == "ap":
        return float(rv[guard.name]) - cfg.threshold(guard.name)
    if op == "true":
        return float(cfg.rho_max)
    if op == "false":
        return -float(cfg.rho_max)
    if op == "not":
        return -qs_eval_state(guard.children[0], rv, cfg)
    if op in ("and", "or", "implies"):
        a = qs_eval_state(guard.children[0], rv, cfg)
        b = qs_eval_state(guard.children[1], rv, cfg)
        if op == "and":
            return min(a, b)
        if op == "or":
            return max(a, b)
        return max(-a, b)
    raise DomainError(f"temporal operator {op} in a state formula")


def qs_eval(formula: Formula, trace: Sequence[Mapping[str, float]], cfg: QSConfig) -> float:
    """Robustness of ``formula`` over a finite ``trace`` of robustness vectors.

    Temporal operators range over the remaining suffix; the left operand of
    ``U`` is scored on the window that ends at the split point. ``X`` at the
    final position is undefined and raises :class:`DomainError`.
    """
    if len(trace) == 0:
        raise DomainError("trace must contain at least one state")
    names = sorted(formula.atoms())
    for n in names:
        for rv in trace:
            if n not in rv:
                raise KeyError(f"trace state is missing proposition {n!r}")
    cols = {n: np.array([float(rv[n]) for rv in trace]) - cfg.threshold(n) for n in names}
    sig = _signal(formula, cols, len(trace), cfg)
    value = float(sig[0])
    if np.isnan(value):
        raise DomainError("X applied at the final trace position")
    return value


def _signal(f: Formula, cols: dict[str, np.ndarray], end: int, cfg: QSConfig) -> np.ndarray:
    """Robustness of ``f`` on each window ``[t, end)`` for ``t < end``.

    Undefined entries (``X`` falling off the window) are NaN and propagate.
    """
    op = f.op
    if op == "ap":
        return cols[f.name][:end].copy()
    if op == "true":
        return np.full(end, float(cfg.rho_max))
    if op == "false":
        return np.full(end, -float(cfg.rho_max))
    if op == "not":
        return -_signal(f.children[0], cols, end, cfg)
    if op in ("and", "or", "implies"):
        a = _signal(f.children[0], cols, end, cfg)
        b = _signal(f.children[1], cols, end, cfg)
        if op == "and":
            return np.minimum(a, b)
        if op == "or":
            return np.maximum(a, b)
        return np.maximum(-a, b)
    if op == "X":
        inner = _signal(f.children[0], cols, end, cfg)
        out = np.full(end, np.nan)
        out[:-1] = inner[1:]
        return out
    if op == "G":
        inner = _signal(f.children[0], cols, end, cfg)
        return np.minimum.accumulate(inner[::-1])[::-1]
    if op == "F":
        inner = _signal(f.children[0], cols, end, cfg)
        return np.maximum.accumulate(inner[::-1])[::-1]
    if op == "U":
        lhs, rhs = f.children
        psi = _signal(rhs, cols, end, cfg)
        # phi_win[t2, t1] = robustness of lhs on window [t2, t1), t2 < t1
        phi_win = np.full((end, end), np.nan)
        for t1 in range(1, end):
            phi_win[:t1, t1] = _signal(lhs, cols, t1, cfg)
        out = np.empty(end)
        for t in range(end):
            best = -np.inf
            for t1 in range(t, end):
                prefix = phi_win[t:t1, t1]
                guard = float(cfg.rho_max) if prefix.size == 0 else _nanmin(prefix)
                cand = _nanmin(np.array([psi[t1], guard]))
                best = _nanmax(np.array([best, cand]))
            out[t] = best
        return out
    raise ValueError(f"unknown operator {op!r}")


def _nanmin(a: np.ndarray) -> float:
    return float("nan") if np.isnan(a).any() else float(a.min())


def _nanmax(a: np.ndarray) -> float:
    return float("nan") if np.isnan(a).any() else float(a.max())
