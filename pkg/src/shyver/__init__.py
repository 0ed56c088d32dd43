"""Statistical verification of stochastic hybrid systems.

A hybrid model is reduced on a grid to a finite Markov chain, the temporal
formula is strengthened by the reduction error, and the strengthened formula
is decided on the chain by sequential hypothesis tests.
"""

__version__ = "0.1.0"

from pathlib import Path as _Path


def data_path(name: str) -> _Path:
    """Path of a bundled example file (``two_mode.json``, ``heat.json``, ``casestudy_n5.json``)."""
    return _Path(__file__).parent / "data" / name


from .casestudy import CaseStudy
from .checker import CheckerConfig, Verdict, check_iltl, check_mitl_ctmc, verify_shs_ct, verify_shs_dt
from .logic import format_formula, parse_formula, strengthen
from .markov import MarkovChain, estimate_invariant
from .model import load_model, model_from_dict
from .reduction import build_grid_partition, reduce_ct, reduce_dt
from .stats import StatParams, alg0, closeness_test, sprt_bernoulli

__all__ = [
    "__version__",
    "data_path",
    "CaseStudy",
    "CheckerConfig",
    "Verdict",
    "check_iltl",
    "check_mitl_ctmc",
    "verify_shs_ct",
    "verify_shs_dt",
    "format_formula",
    "parse_formula",
    "strengthen",
    "MarkovChain",
    "estimate_invariant",
    "load_model",
    "model_from_dict",
    "build_grid_partition",
    "reduce_ct",
    "reduce_dt",
    "StatParams",
    "alg0",
    "closeness_test",
    "sprt_bernoulli",
]
