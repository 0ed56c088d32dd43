"""Büchi automata for iLTL and three-valued MITL monitoring of piecewise-constant signals."""

from .buchi import (
    BuchiAutomaton,
    LassoWord,
    accepts_lasso,
    is_intersection_empty,
    lasso_automaton,
    ltl_to_buchi,
    propositions,
)
from .mitl import (
    IntervalSet,
    ThreeValuedSignal,
    assemble_signal,
    eval_mitl,
    eval_mitl_three_valued,
    label_from_pair,
    sat_set,
    segment_bounds,
    segment_count,
)

__all__ = [
    "BuchiAutomaton",
    "LassoWord",
    "accepts_lasso",
    "is_intersection_empty",
    "lasso_automaton",
    "ltl_to_buchi",
    "propositions",
    "IntervalSet",
    "ThreeValuedSignal",
    "assemble_signal",
    "eval_mitl",
    "eval_mitl_three_valued",
    "label_from_pair",
    "sat_set",
    "segment_bounds",
    "segment_count",
]
