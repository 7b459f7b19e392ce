"""Regenerate manifest.json: the frozen expectations for this corpus.

The reference campaign is fully deterministic, so every count below is
computable in advance: declared-order outcomes follow the run-index
parity rule, shuffled-order outcomes follow the seed derivation plus the
shuffle permutation, and outage outcomes follow the staged row list.

Run from the repository root after any change to the corpus projects or
the campaign recipe:  python fixture_corpus/generate_manifest.py
"""

from __future__ import annotations

import json
from pathlib import Path

from flakeminer._shuffle_plugin import shuffle_order
from flakeminer.execution import derive_run_seed

CAMPAIGN = {
    "num_runs": 5,
    "plus_random_runs": True,
    "base_seed": 42,
    "iterations_per_project": 4,
    "project_rows": {
        "det_flaky": [1, 2, 3, 4],
        "od_pair": [5, 6, 7, 8],
        "outage_sim": [9, 10, 11, 12],
    },
    "campaign_env": {"FIXTURE_OUTAGE_ROWS": "12"},
}

# Collection order of od_pair/test_suite.py (definition order).
OD_PAIR_TESTS = [
    "test_fresh_state_observable",
    "test_victim",
    "test_stable_arithmetic",
    "test_stable_strings",
    "test_stable_slicing",
    "test_stable_dict_access",
    "test_stable_set_algebra",
    "test_stable_comprehension",
    "test_stable_unpacking",
    "test_polluter",
]
VICTIM_POS = OD_PAIR_TESTS.index("test_victim")
POLLUTER_POS = OD_PAIR_TESTS.index("test_polluter")


def victim_fails(seed: int) -> bool:
    order = shuffle_order(len(OD_PAIR_TESTS), seed)
    return order.index(POLLUTER_POS) < order.index(VICTIM_POS)


def find_shuffle_seeds() -> tuple[int, int]:
    """Smallest seeds demonstrating both victim outcomes."""
    adversarial = next(s for s in range(10_000) if victim_fails(s))
    friendly = next(s for s in range(10_000) if not victim_fails(s))
    return adversarial, friendly


def counts(passed_same: int, failed_same: int, passed_random: int, failed_random: int) -> dict:
    return {
        "passed_same": passed_same,
        "failed_same": failed_same,
        "error_same": 0,
        "skipped_same": 0,
        "passed_random": passed_random,
        "failed_random": failed_random,
        "error_random": 0,
        "skipped_random": 0,
    }


def build_manifest() -> dict:
    num_runs = CAMPAIGN["num_runs"]
    base_seed = CAMPAIGN["base_seed"]
    rows = CAMPAIGN["project_rows"]
    iterations = CAMPAIGN["iterations_per_project"]
    total = num_runs * iterations

    # det_flaky: parity on the global run index. Declared runs use indices
    # 0..num_runs-1, shuffled runs continue the sequence.
    same_pass = sum(1 for i in range(num_runs) if i % 2 == 0)
    random_pass = sum(1 for i in range(num_runs, 2 * num_runs) if i % 2 == 0)

    # od_pair: victim fails a shuffled run when the polluter lands first.
    victim_random_fails = 0
    od_run_expectations = []
    for row in rows["od_pair"]:
        for index in range(num_runs, 2 * num_runs):
            seed = derive_run_seed(base_seed, row, index)
            fails = victim_fails(seed)
            victim_random_fails += fails
            od_run_expectations.append(
                {"row": row, "run_index": index, "seed": seed, "victim_fails": fails}
            )

    # outage_sim: the staged row fails every run of its iteration.
    outage_rows = [
        int(r) for r in CAMPAIGN["campaign_env"]["FIXTURE_OUTAGE_ROWS"].split(",")
    ]
    outage_fail_runs = num_runs * sum(1 for r in outage_rows if r in rows["outage_sim"])

    adversarial, friendly = find_shuffle_seeds()

    tests = []
    tests.append(
        {
            "project": "det_flaky",
            "file": "test_parity.py",
            "classname": "test_parity",
            "name": "test_always_passes",
            "verdict": "not flaky",
            "mechanism": "constant assertion",
            "counts": counts(total, 0, total, 0),
        }
    )
    tests.append(
        {
            "project": "det_flaky",
            "file": "test_parity.py",
            "classname": "test_parity",
            "name": "test_counter_parity",
            "verdict": "non-order-dependent",
            "mechanism": "parity of the harness-provided global run index",
            "counts": counts(
                same_pass * iterations,
                (num_runs - same_pass) * iterations,
                random_pass * iterations,
                (num_runs - random_pass) * iterations,
            ),
        }
    )
    for name in OD_PAIR_TESTS:
        if name == "test_victim":
            verdict = "order-dependent"
            mechanism = "fails when the polluter is shuffled before it"
            c = counts(
                total, 0, total - victim_random_fails, victim_random_fails
            )
        else:
            verdict = "not flaky"
            mechanism = (
                "mutates shared state, itself always passes"
                if name == "test_polluter"
                else "order-neutral"
            )
            c = counts(total, 0, total, 0)
        tests.append(
            {
                "project": "od_pair",
                "file": "test_suite.py",
                "classname": "test_suite",
                "name": name,
                "verdict": verdict,
                "mechanism": mechanism,
                "counts": c,
            }
        )
    for name in ("test_auth_token_valid", "test_data_fetch", "test_service_reachable"):
        tests.append(
            {
                "project": "outage_sim",
                "file": "test_service.py",
                "classname": "test_service",
                "name": name,
                "verdict": "infrastructure",
                "mechanism": "whole iterations fail while the staged outage lasts",
                "counts": counts(
                    total - outage_fail_runs,
                    outage_fail_runs,
                    total - outage_fail_runs,
                    outage_fail_runs,
                ),
            }
        )

    return {
        "fixture_version": 1,
        "campaign": CAMPAIGN,
        "od_pair": {
            "collection_order": OD_PAIR_TESTS,
            "adversarial_shuffle_seed": adversarial,
            "friendly_shuffle_seed": friendly,
            "run_expectations": od_run_expectations,
        },
        "tests": tests,
    }


def main() -> None:
    manifest_path = Path(__file__).parent / "manifest.json"
    manifest_path.write_text(
        json.dumps(build_manifest(), indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {manifest_path}")


if __name__ == "__main__":
    main()
