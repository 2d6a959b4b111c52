import random

import pytest

from stringsmith.catalog import full_task_set
from stringsmith.dataset import build_dataset, post_process
from stringsmith.samplers import bundled_corpus


@pytest.fixture(scope="session")
def tasks():
    return full_task_set()


@pytest.fixture(scope="session")
def corpus():
    return bundled_corpus()


@pytest.fixture(scope="session")
def small_tasks(tasks):
    # fixed mixed subset: all-atomic coverage comes from dedicated tests
    rng = random.Random(2024)
    return rng.sample(tasks, 48)


@pytest.fixture(scope="session")
def mini_multilingual(small_tasks):
    built = build_dataset("multilingual", tasks=small_tasks,
                          n_per_template=2, seed=5)
    return post_process(built.samples, tasks=small_tasks)


@pytest.fixture(scope="session")
def mini_hash(small_tasks):
    built = build_dataset("hash", tasks=small_tasks, n_per_template=2, seed=5)
    return post_process(built.samples, tasks=small_tasks)


@pytest.fixture(scope="session")
def mini_random(small_tasks):
    built = build_dataset("random", tasks=small_tasks, n_per_template=2, seed=5)
    return post_process(built.samples, tasks=small_tasks)
