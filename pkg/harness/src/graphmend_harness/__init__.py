"""Equivalence and break-count harness for graphmend fixture pairs."""

from .runner import (
    EquivalenceResult,
    FixtureCase,
    count_breaks,
    prepare_workdir,
    run_case,
    run_suite,
)

__all__ = [
    "EquivalenceResult",
    "FixtureCase",
    "count_breaks",
    "prepare_workdir",
    "run_case",
    "run_suite",
]
