import tempfile
from collections import Counter
from pathlib import Path

import pytest

from stringsmith.catalog import (CompositionConfig, atomic_catalog, compose,
                                 full_task_set, read_tasks, write_tasks)
from stringsmith.lang import StepRef, canonical_hash


def test_atomic_catalog_size_and_ids():
    catalog = atomic_catalog()
    assert len(catalog) == 49
    assert len({op.op_id for op in catalog}) == 49
    for op in catalog:
        assert op.program.task_id == op.op_id
        assert op.program.origin == "atomic"
        assert op.program.depth == 1


def test_full_set_counts(tasks):
    assert len(tasks) == 1511
    origins = Counter(t.origin for t in tasks)
    assert origins == {"atomic": 49, "composite": 1462}
    depths = Counter(t.depth for t in tasks if t.origin == "composite")
    assert set(depths) == {2, 3, 4}
    kinds = Counter(t.output_kind.value for t in tasks)
    assert set(kinds) == {"str", "int", "bool", "str_list"}
    assert kinds["str"] > kinds["str_list"] > 0


def test_composites_are_linear_chains(tasks):
    for t in tasks:
        if t.origin != "composite":
            continue
        for i, step in enumerate(t.steps):
            refs = [arg for arg in step.args if isinstance(arg, StepRef)]
            if i == 0:
                assert refs == []
            else:
                assert len(refs) == 1 and refs[0].index == i - 1, t.task_id


def test_all_hashes_distinct(tasks):
    hashes = [canonical_hash(t) for t in tasks]
    assert len(set(hashes)) == len(tasks)


def test_task_ids_stable_and_formatted(tasks):
    composite_ids = [t.task_id for t in tasks if t.origin == "composite"]
    assert composite_ids[0] == "comp-0001"
    assert all(i.startswith("comp-") for i in composite_ids)
    assert len(set(composite_ids)) == len(composite_ids)


def test_same_seed_same_tasks(tasks):
    again = full_task_set()
    assert again == tasks


def test_other_seed_other_tasks(tasks):
    other = full_task_set(CompositionConfig(seed=99))
    assert other != tasks
    assert len(other) == len(tasks)  # same target, different draws


def test_depth_range_is_respected():
    config = CompositionConfig(seed=1, depth_range=(2, 2), target_count=120)
    composites = compose(atomic_catalog(), config)
    assert len(composites) == 120
    assert all(t.depth == 2 for t in composites)


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        CompositionConfig(depth_range=(1, 3))
    with pytest.raises(ValueError):
        CompositionConfig(depth_range=(4, 2))
    with pytest.raises(ValueError):
        CompositionConfig(target_count=0)


def test_task_file_round_trip(tasks):
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "tasks.jsonl"
        write_tasks(tasks, path)
        back = read_tasks(path)
        assert back == tasks
        write_tasks(back, Path(td) / "again.jsonl")
        assert path.read_bytes() == (Path(td) / "again.jsonl").read_bytes()


def test_read_tasks_detects_kind_drift(tasks):
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "tasks.jsonl"
        write_tasks(tasks[:3], path)
        text = path.read_text().replace('"output_kind":"str"',
                                        '"output_kind":"int"', 1)
        path.write_text(text)
        with pytest.raises(ValueError):
            read_tasks(path)
