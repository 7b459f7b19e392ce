"""Deterministically non-order-dependent subject.

The harness exports the global run index; parity on it makes the test
flip between passing and failing runs of the very same order, with an
exactly predictable pass/fail split.
"""

import os


def test_always_passes():
    assert sum(range(5)) == 10


def test_counter_parity():
    run_index = int(os.environ.get("FLAKEMINER_RUN_INDEX", "0"))
    assert run_index % 2 == 0
