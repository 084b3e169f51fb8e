"""Boltzmann samplers driven by tuned branching tables."""
from .api import (
    Exhausted,
    colour_subsets,
    FinalStateUnreachable,
    NonRational,
    NotStronglyConnected,
    default_window,
    interruptible_counts,
    interruptible_sample,
    sample,
    sample_colored_mset1,
    sample_cycle,
    sample_many,
    sample_mset,
    stats,
)
from .random import RandomSource
from .structure import Node, Structure, canonical_key, decode, tally, to_json_text, to_text
from .tables import BranchTable, DegenerateBranch, build_tables, colored_mset1_dp

__all__ = [
    "BranchTable", "DegenerateBranch", "Exhausted", "FinalStateUnreachable", "Node",
    "NonRational", "NotStronglyConnected", "RandomSource", "Structure", "build_tables",
    "canonical_key", "colour_subsets", "colored_mset1_dp", "decode", "default_window", "interruptible_counts", "interruptible_sample",
    "sample", "sample_colored_mset1", "sample_cycle", "sample_many", "sample_mset", "stats",
    "tally", "to_json_text", "to_text",
]
