"""
Exhaustive evaluation oracle for differential graphs.

Evaluates the root under every assignment of the shared free inputs at once,
one bit per assignment, using the reference evaluator of the circuit graph.
"""

import logging
from typing import Dict, Mapping

from .boolexpr import input_pattern
from .differential import DifferentialGraph, Verdict

logger = logging.getLogger(__name__)

DEFAULT_MAX_INPUTS = 20


class OracleError(Exception):
    """Base exception for oracle errors"""
    pass


class TooManyInputs(OracleError):
    """Raised when a differential has more free inputs than the enumeration bound"""

    def __init__(self, count: int, bound: int):
        self.count = count
        self.bound = bound
        super().__init__(f"{count} free inputs exceed the brute-force bound of {bound}")


def brute_force_verdict(diff: DifferentialGraph, max_inputs: int = DEFAULT_MAX_INPUTS) -> Verdict:
    """
    Decide a differential graph by enumerating all free-input assignments.

    Assignments are ordered lexicographically with the first shared input as
    the most significant bit, so the returned witness is the first witnessing
    assignment in that order.

    Raises:
        TooManyInputs: If the differential has more than ``max_inputs`` free inputs
    """
    names = diff.input_names
    count = len(names)
    if count > max_inputs:
        raise TooManyInputs(count, max_inputs)

    total = 1 << count
    mask = (1 << total) - 1
    assignment = {name: input_pattern(count - 1 - position, count) for position, name in enumerate(names)}
    root = diff.evaluate_root(assignment, mask)

    stats = {'assignments': total, 'satisfying': bin(root).count("1")}
    if not root:
        return Verdict(effective=False, stats=stats)

    first = (root & -root).bit_length() - 1
    witness = {name: (first >> (count - 1 - position)) & 1 for position, name in enumerate(names)}
    return Verdict(effective=True, witness=witness, stats=stats)


def replay_witness(diff: DifferentialGraph, witness: Mapping[str, int]) -> bool:
    """
    Check that a witness drives the root of a differential graph to 1.

    Inputs missing from the witness default to 0.
    """
    assignment: Dict[str, int] = {name: int(witness.get(name, 0)) & 1 for name in diff.input_names}
    holds = diff.evaluate_root(assignment) == 1
    if not holds:
        logger.warning(f"Witness {assignment} does not satisfy the root of {diff.graph.name}")
    return holds
