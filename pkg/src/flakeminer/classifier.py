"""Flakiness classification over per-test outcome matrices.

A matrix collects every verdict a test produced, bucketed by (iteration,
order). Classification precedence: flaky within a declared-order cell
beats order-dependence beats pooled-only (infrastructure) flakiness.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from .errors import EmptyMatrix
from .junit_parser import Order, RunRecord, TestId, Verdict

IterationKey = tuple[str, int]


class FlakinessVerdict(enum.Enum):
    NOT_FLAKY = "not flaky"
    NON_ORDER_DEPENDENT = "non-order-dependent"
    ORDER_DEPENDENT = "order-dependent"
    INFRASTRUCTURE = "infrastructure"

    @property
    def label(self) -> str:
        return self.value


def is_flaky(verdicts: Iterable[Verdict]) -> bool:
    """True when the verdicts mix a pass with a failure or an error.

    Alternation between Failed and Error alone is consistent breakage, not
    flakiness, and Skipped never contributes.
    """
    saw_pass = False
    saw_fail = False
    for v in verdicts:
        if v is Verdict.PASSED:
            saw_pass = True
        elif v in (Verdict.FAILED, Verdict.ERROR):
            saw_fail = True
        if saw_pass and saw_fail:
            return True
    return False


@dataclass
class OutcomeMatrix:
    """All observed verdicts for one test, keyed by (iteration, order).

    Cell lists are in run-index order. appearances counts the runs in
    which the test showed up at all; tests may be absent from some runs
    (collection differences) and are classified over present runs only.
    """

    test: TestId
    cells: dict[tuple[IterationKey, Order], list[Verdict]] = field(default_factory=dict)
    appearances: int = 0

    def add(self, iteration_key: IterationKey, order: Order, verdict: Verdict) -> None:
        self.cells.setdefault((iteration_key, order), []).append(verdict)
        self.appearances += 1

    def cells_for_order(self, order: Order) -> list[list[Verdict]]:
        return [vs for (_, o), vs in self.cells.items() if o is order]

    def all_verdicts(self) -> list[Verdict]:
        return [v for vs in self.cells.values() for v in vs]


def build_matrices(records: Iterable[RunRecord]) -> dict[TestId, OutcomeMatrix]:
    """Group run records (all belonging to one project) into matrices."""
    ordered = sorted(
        records, key=lambda r: (r.iteration_key[1], r.iteration_key[0], r.run_index)
    )
    matrices: dict[TestId, OutcomeMatrix] = {}
    for record in ordered:
        matrix = matrices.get(record.test)
        if matrix is None:
            matrix = matrices[record.test] = OutcomeMatrix(test=record.test)
        matrix.add(record.iteration_key, record.order, record.verdict)
    return matrices


def decide_verdict(matrix: OutcomeMatrix) -> FlakinessVerdict:
    """Classify one test's matrix.

    - flaky inside any single iteration's declared-order runs: the test
      flips under identical conditions (non-order-dependent);
    - otherwise flaky inside any single iteration's shuffled runs: only
      the order change explains the flip (order-dependent);
    - otherwise flaky only across the pooled runs of all iterations: the
      flip tracks the environment, not the suite (infrastructure);
    - otherwise not flaky.
    """
    if not matrix.cells:
        raise EmptyMatrix(f"no outcomes recorded for {matrix.test}")
    if any(is_flaky(cell) for cell in matrix.cells_for_order(Order.SAME)):
        return FlakinessVerdict.NON_ORDER_DEPENDENT
    if any(is_flaky(cell) for cell in matrix.cells_for_order(Order.RANDOM)):
        return FlakinessVerdict.ORDER_DEPENDENT
    if is_flaky(matrix.all_verdicts()):
        return FlakinessVerdict.INFRASTRUCTURE
    return FlakinessVerdict.NOT_FLAKY


@dataclass(frozen=True)
class VerdictCounts:
    """Per-order verdict tallies for one test, pooled over iterations."""

    passed_same: int = 0
    failed_same: int = 0
    error_same: int = 0
    skipped_same: int = 0
    passed_random: int = 0
    failed_random: int = 0
    error_random: int = 0
    skipped_random: int = 0

    @property
    def total(self) -> int:
        return (
            self.passed_same + self.failed_same + self.error_same + self.skipped_same
            + self.passed_random + self.failed_random + self.error_random
            + self.skipped_random
        )


def count_verdicts(matrix: OutcomeMatrix) -> VerdictCounts:
    tally = {(o, v): 0 for o in Order for v in Verdict}
    for (_, order), verdicts in matrix.cells.items():
        for verdict in verdicts:
            tally[(order, verdict)] += 1
    return VerdictCounts(
        passed_same=tally[(Order.SAME, Verdict.PASSED)],
        failed_same=tally[(Order.SAME, Verdict.FAILED)],
        error_same=tally[(Order.SAME, Verdict.ERROR)],
        skipped_same=tally[(Order.SAME, Verdict.SKIPPED)],
        passed_random=tally[(Order.RANDOM, Verdict.PASSED)],
        failed_random=tally[(Order.RANDOM, Verdict.FAILED)],
        error_random=tally[(Order.RANDOM, Verdict.ERROR)],
        skipped_random=tally[(Order.RANDOM, Verdict.SKIPPED)],
    )
