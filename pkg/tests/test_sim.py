"""Schedule construction: the engine against an independent re-derivation."""

from __future__ import annotations

import random

import pytest

from drens.expr import DispatchingRule, parse
from drens.instances import Instance, JobSpec
from drens.sim import (
    Assignment,
    initial_state,
    run_sgs,
    simulate_from,
    twt_of,
)

from conftest import random_instance
from oracles import reference_sgs
from test_expr import random_tree  # reuse the unconstrained tree sampler

# a spread of fixed rules covering every dependence class
FIXED_RULES = [
    "pt",
    "w",
    "(/ pt w)",                 # weighted shortest processing time
    "dd",                       # earliest due date
    "(- dd age)",               # time-dependent
    "(+ pt sl)",                # slack-driven
    "(+ pt mr)",                # machine-state-dependent
    "(+ pat (/ pt w))",         # fastest-machine wait
    "(- (pos (- dd pt)) age)",
    "(/ (* dd pt) (+ w age))",
]


def assert_schedule_well_formed(inst, result):
    n = len(inst.jobs)
    assert [a.job for a in result.assignments] == list(range(n))
    by_machine: dict[int, list[Assignment]] = {}
    for a in result.assignments:
        spec = inst.jobs[a.job]
        assert 0 <= a.machine < inst.machines
        assert a.start >= spec.release, "job started before its release"
        assert a.completion == a.start + spec.proc_times[a.machine]
        by_machine.setdefault(a.machine, []).append(a)
    for runs in by_machine.values():
        runs.sort(key=lambda a: a.start)
        for earlier, later in zip(runs, runs[1:]):
            assert earlier.completion <= later.start, "machine overlap"
    assert result.twt == twt_of(result.assignments, inst)


# ---------------------------------------------------------------------------
# anchored examples


def test_two_machine_worked_example():
    inst = Instance("ex", 2, [
        JobSpec(0, 2, 1, (2, 4)),
        JobSpec(0, 3, 2, (3, 3)),
        JobSpec(0, 4, 3, (9, 1)),
    ])
    result = run_sgs(inst, parse("pt"))
    assert result.twt == 4.0
    assert result.assignments == [
        Assignment(0, 0, 0, 2),
        Assignment(1, 0, 2, 5),
        Assignment(2, 1, 0, 1),
    ]


def test_single_machine_spt_order():
    inst = Instance("spt", 1, [
        JobSpec(0, 100, 1, (5,)),
        JobSpec(0, 100, 1, (2,)),
        JobSpec(0, 100, 1, (8,)),
        JobSpec(0, 100, 1, (1,)),
    ])
    result = run_sgs(inst, parse("pt"))
    starts = {a.job: a.start for a in result.assignments}
    assert starts == {3: 0, 1: 1, 0: 3, 2: 8}
    assert result.twt == 0.0


def test_job_waits_for_busy_preferred_machine():
    # machine 1 is far faster for job 1, so under `pt` job 1 does not grab
    # the idle-but-slow machine 0 while machine 1 is busy
    inst = Instance("wait", 2, [
        JobSpec(0, 0, 1, (50, 1)),
        JobSpec(0, 0, 1, (50, 2)),
    ])
    result = run_sgs(inst, parse("pt"))
    assert result.assignments[0] == Assignment(0, 1, 0, 1)
    assert result.assignments[1] == Assignment(1, 1, 1, 3)


def test_priority_tie_breaks_by_job_then_machine():
    # equal priorities everywhere: job 0 goes first, and both jobs prefer
    # machine 0 (machine ties break to the lowest index), so job 1 queues
    # behind job 0 instead of taking the idle machine 1
    inst = Instance("tie", 2, [
        JobSpec(0, 9, 1, (3, 3)),
        JobSpec(0, 9, 1, (3, 3)),
    ])
    result = run_sgs(inst, parse("w"))
    assert result.assignments[0] == Assignment(0, 0, 0, 3)
    assert result.assignments[1] == Assignment(1, 0, 3, 6)


def test_releases_gate_availability():
    # the short job is not yet released at time 0, so the long one starts
    inst = Instance("rel", 1, [
        JobSpec(3, 50, 1, (2,)),
        JobSpec(0, 50, 1, (10,)),
    ])
    result = run_sgs(inst, parse("pt"))
    assert result.assignments[1].start == 0
    assert result.assignments[0].start == 10


def test_idle_gap_when_nothing_released():
    inst = Instance("gap", 1, [JobSpec(7, 9, 2, (4,))])
    result = run_sgs(inst, parse("pt"))
    assert result.assignments == [Assignment(0, 0, 7, 11)]
    assert result.twt == 2 * (11 - 9)


# ---------------------------------------------------------------------------
# the main property: engine == reference on random instances and rules


@pytest.mark.parametrize("text", FIXED_RULES)
def test_engine_matches_reference_fixed_rules(text):
    rng = random.Random(hash(text) & 0xFFFF)
    rule = parse(text)
    for _ in range(60):
        inst = random_instance(rng)
        result = run_sgs(inst, rule)
        ref_assign, ref_twt = reference_sgs(inst, rule.root)
        assert [(a.job, a.machine, a.start, a.completion) for a in result.assignments] == ref_assign
        assert result.twt == ref_twt
        assert_schedule_well_formed(inst, result)


def test_engine_matches_reference_random_rules():
    rng = random.Random(2024)
    for _ in range(250):
        tree = random_tree(rng, 4)
        inst = random_instance(rng)
        result = run_sgs(inst, DispatchingRule(tree))
        ref_assign, ref_twt = reference_sgs(inst, tree)
        assert [(a.job, a.machine, a.start, a.completion) for a in result.assignments] == ref_assign
        assert result.twt == ref_twt


def test_engine_deterministic_across_calls(rng):
    inst = random_instance(rng, n_jobs=8, machines=3)
    rule = parse("(+ pt (/ sl w))")
    first = run_sgs(inst, rule)
    second = run_sgs(inst, rule)
    assert first.assignments == second.assignments
    assert first.twt == second.twt


def test_larger_instances_stay_consistent():
    rng = random.Random(77)
    for _ in range(10):
        inst = random_instance(rng, n_jobs=30, machines=5, max_release=40)
        for text in ("(/ pt w)", "(+ mr (- dd age))"):
            result = run_sgs(inst, parse(text))
            ref_assign, ref_twt = reference_sgs(inst, parse(text).root)
            assert result.twt == ref_twt
            assert_schedule_well_formed(inst, result)


# ---------------------------------------------------------------------------
# twt_of


def test_twt_of_zero_when_everything_on_time():
    inst = Instance("ontime", 1, [JobSpec(0, 10, 3, (2,)), JobSpec(0, 10, 2, (3,))])
    assignments = [Assignment(0, 0, 0, 2), Assignment(1, 0, 2, 5)]
    assert twt_of(assignments, inst) == 0.0


def test_twt_of_weights_late_work():
    inst = Instance("late", 1, [JobSpec(0, 1, 3, (2,)), JobSpec(0, 2, 2, (3,))])
    assignments = [Assignment(0, 0, 0, 2), Assignment(1, 0, 2, 5)]
    assert twt_of(assignments, inst) == 3 * 1 + 2 * 3


def test_twt_of_rejects_bad_covers():
    inst = Instance("cover", 1, [JobSpec(0, 1, 1, (2,)), JobSpec(0, 1, 1, (2,))])
    with pytest.raises(ValueError, match="missing job"):
        twt_of([Assignment(0, 0, 0, 2)], inst)
    with pytest.raises(ValueError, match="more than once"):
        twt_of([Assignment(0, 0, 0, 2), Assignment(0, 0, 2, 4), Assignment(1, 0, 4, 6)], inst)
    with pytest.raises(ValueError, match="unknown job"):
        twt_of([Assignment(5, 0, 0, 2)], inst)


# ---------------------------------------------------------------------------
# simulate_from


def test_simulate_from_initial_state_equals_full_run_when_all_released(rng):
    for _ in range(40):
        inst = random_instance(rng, all_released=True)
        rule = DispatchingRule(random_tree(rng, 3))
        state = initial_state(inst)
        state.released_pending = list(range(len(inst.jobs)))
        state.unreleased = []
        first, sim_twt = simulate_from(state, inst, rule)
        full = run_sgs(inst, rule)
        assert sim_twt == full.twt
        by_start = sorted(full.assignments, key=lambda a: (a.start, a.job))
        assert first is not None
        assert first in full.assignments
        assert first.start == 0 or first.start == by_start[0].start


def test_simulate_from_ignores_unreleased_jobs():
    inst = Instance("horizon", 1, [
        JobSpec(0, 5, 1, (3,)),
        JobSpec(100, 500, 9, (50,)),  # far-future job must not be scheduled
    ])
    state = initial_state(inst)
    state.released_pending = [0]
    state.unreleased = [1]
    first, sim_twt = simulate_from(state, inst, parse("pt"))
    assert first == Assignment(0, 0, 0, 3)
    assert sim_twt == 0.0


def test_simulate_from_does_not_mutate_state():
    inst = Instance("mut", 2, [JobSpec(0, 1, 1, (4, 6)), JobSpec(0, 2, 2, (3, 5))])
    state = initial_state(inst)
    state.released_pending = [0, 1]
    state.unreleased = []
    before = (state.now, list(state.machine_free), list(state.released_pending))
    simulate_from(state, inst, parse("pt"))
    assert (state.now, state.machine_free, state.released_pending) == before


def test_simulate_from_empty_pending_returns_none():
    inst = Instance("none", 1, [JobSpec(5, 9, 1, (2,))])
    state = initial_state(inst)
    first, sim_twt = simulate_from(state, inst, parse("pt"))
    assert first is None
    assert sim_twt == 0.0


def test_simulate_from_rejects_unknown_horizon():
    inst = Instance("hz", 1, [JobSpec(0, 9, 1, (2,))])
    with pytest.raises(ValueError, match="horizon"):
        simulate_from(initial_state(inst), inst, parse("pt"), horizon="everything")


def test_simulate_counts_only_simulated_tardiness():
    # one job already committed (late); the sim must not count its tardiness
    inst = Instance("partial", 1, [JobSpec(0, 1, 5, (4,)), JobSpec(0, 20, 1, (2,))])
    state = initial_state(inst)
    state.now = 4
    state.machine_free = [4]
    state.released_pending = [1]
    state.unreleased = []
    state.committed = [Assignment(0, 0, 0, 4)]
    first, sim_twt = simulate_from(state, inst, parse("pt"))
    assert first == Assignment(1, 0, 4, 6)
    assert sim_twt == 0.0  # job 1 finishes at 6 <= 20; job 0's lateness excluded
