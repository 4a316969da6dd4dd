"""Shared builders for the test suite."""

from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

from drens.instances import Instance, JobSpec


def random_instance(
    rng: random.Random,
    n_jobs: int | None = None,
    machines: int | None = None,
    *,
    max_proc: int = 9,
    max_release: int = 12,
    name: str = "t",
    all_released: bool = False,
) -> Instance:
    """Small random instance with tight-ish due dates (tardiness is common)."""
    n = n_jobs if n_jobs is not None else rng.randint(2, 6)
    m = machines if machines is not None else rng.randint(1, 3)
    jobs = []
    for _ in range(n):
        proc = tuple(rng.randint(1, max_proc) for _ in range(m))
        release = 0 if all_released else rng.randint(0, max_release)
        due = release + rng.randint(0, max_proc + 4)
        weight = rng.randint(1, 5)
        jobs.append(JobSpec(release, due, weight, proc))
    inst = Instance(name, m, jobs)
    inst.validate()
    return inst


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC0FFEE)
