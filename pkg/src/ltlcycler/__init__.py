"""LTL-constrained policy optimisation with Cycle Experience Replay shaping."""

from .automaton import LDBA, load_flatworld_ldba, parse_ldba, serialize_ldba
from .cycles import CyclePath, brute_force_paths, find_macs, find_maips
from .logic import Formula, QSConfig, bool_eval, parse_ltl, qs_eval, qs_eval_state
from .shaping import ShapingConfig, cycler_assign, shape_trajectory

__version__ = "0.1.0"

__all__ = [
    "LDBA",
    "CyclePath",
    "Formula",
    "QSConfig",
    "ShapingConfig",
    "bool_eval",
    "brute_force_paths",
    "cycler_assign",
    "find_macs",
    "find_maips",
    "load_flatworld_ldba",
    "parse_ldba",
    "parse_ltl",
    "qs_eval",
    "qs_eval_state",
    "serialize_ldba",
    "shape_trajectory",
]
