"""Pytest plugin: deterministic seeded shuffling of collected test items.

This file is copied verbatim into run workspaces and loaded with
`-p <module>`, so it must stay self-contained (stdlib only).
"""

import random

SEED_OPTION = "--random-order-seed"


def shuffle_order(count, seed):
    """Permutation applied to `count` collected items under `seed`.

    Kept importable on its own so orchestration code can predict the
    execution order a run will use.
    """
    indices = list(range(count))
    random.Random(int(seed)).shuffle(indices)
    return indices


def pytest_addoption(parser):
    group = parser.getgroup("shuffle")
    group.addoption(
        SEED_OPTION,
        action="store",
        default=None,
        help="run collected tests in a deterministic shuffled order",
    )


def pytest_collection_modifyitems(session, config, items):
    seed = config.getoption(SEED_OPTION)
    if seed is None:
        return
    order = shuffle_order(len(items), seed)
    items[:] = [items[index] for index in order]
