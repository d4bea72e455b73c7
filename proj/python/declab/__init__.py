"""Decoherence laboratory: spin-bath dephasing, einselection, envariance,
consistent histories, GRW collapse and Bohmian trajectories."""

from fractions import Fraction

from . import _core
from ._core import *  # noqa: F401,F403
from ._core import DeclabError

__all__ = [name for name in dir(_core) if not name.startswith("_")]


def error_code(exc: DeclabError) -> str:
    """The error kind, e.g. 'SizeGuard', from a DeclabError message."""
    return str(exc).split(":", 1)[0]


def fine_grain_fractions(squared):
    """fine_grain with Fraction inputs and outputs."""
    probs, mult, denom, residual = _core.fine_grain([f"{Fraction(q).numerator}/{Fraction(q).denominator}" for q in squared])
    return [Fraction(n, d) for n, d in probs], mult, denom, residual


def run_config_file(path, overrides=()):
    """Loads a YAML config (with key=value overrides) and runs it."""
    document, base_dir = _core.load_config(str(path), list(overrides))
    return _core.run_scenario(document, base_dir)
