"""Discrete-event schedule construction for dynamic unrelated parallel machines.

A dispatching rule is applied non-preemptively: whenever at least one machine
is free and at least one released job is waiting, every pending job is scored
on every machine (busy ones included), each job points at its best (lowest
priority value) machine, and among the jobs whose best machine is actually
free the one with the lowest value starts immediately. Jobs whose best
machine is busy wait for a later decision. The objective is total weighted
tardiness (TWT).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .expr import CompiledRule, DispatchingRule, compile_rule
from .instances import Instance

__all__ = [
    "Assignment",
    "ScheduleResult",
    "SystemState",
    "initial_state",
    "run_sgs",
    "simulate_from",
    "twt_of",
]

_INF = math.inf


@dataclass(frozen=True, slots=True)
class Assignment:
    job: int
    machine: int
    start: int
    completion: int


@dataclass(slots=True)
class ScheduleResult:
    assignments: list[Assignment]  # sorted by job id, one entry per job
    twt: float


@dataclass(slots=True)
class SystemState:
    """A snapshot of a partially built schedule.

    Every job index is in exactly one of released_pending / unreleased /
    committed (by its Assignment). ``unreleased`` is sorted by (release, id).
    """

    now: int
    machine_free: list[int]
    released_pending: list[int]
    unreleased: list[int]
    committed: list[Assignment] = field(default_factory=list)

    def copy(self) -> "SystemState":
        return SystemState(
            self.now,
            list(self.machine_free),
            list(self.released_pending),
            list(self.unreleased),
            list(self.committed),
        )


class _Arrays:
    """Per-instance flat arrays the inner loop reads; built once per instance."""

    __slots__ = (
        "n",
        "m",
        "proci",
        "procf",
        "pminf",
        "pavgf",
        "mpt",
        "rel",
        "due",
        "wt",
        "duef",
        "wtf",
        "release_order",
    )

    def __init__(self, instance: Instance):
        jobs = instance.jobs
        self.n = len(jobs)
        self.m = instance.machines
        self.proci = [job.proc_times for job in jobs]
        self.procf = [[_safe_float(p) for p in job.proc_times] for job in jobs]
        self.pminf = [min(row) for row in self.procf]
        self.pavgf = [sum(row) / len(row) for row in self.procf]
        # fastest machine per job, ties to the lowest machine index
        self.mpt = [min(range(self.m), key=lambda i: (job.proc_times[i], i)) for job in jobs]
        self.rel = [job.release for job in jobs]
        self.due = [job.due for job in jobs]
        self.wt = [job.weight for job in jobs]
        self.duef = [_safe_float(d) for d in self.due]
        self.wtf = [_safe_float(w) for w in self.wt]
        self.release_order = sorted(range(self.n), key=lambda j: (self.rel[j], j))


def _safe_float(x: int) -> float:
    try:
        return float(x)
    except OverflowError:
        return _INF if x > 0 else -_INF


def _arrays(instance: Instance) -> _Arrays:
    # cached on the instance; instances are treated as immutable once built
    cached = instance.__dict__.get("_sim_arrays")
    if cached is None:
        cached = _Arrays(instance)
        instance.__dict__["_sim_arrays"] = cached
    return cached


def _engine(
    arr: _Arrays,
    comp: CompiledRule,
    machine_free: list[int],
    pending: list[int],
    unreleased: list[int],
    ui: int,
    now: int,
    use_releases: bool,
    stop_after_first: bool = False,
    want_assignments: bool = True,
) -> tuple[list[Assignment], int]:
    """Run the dispatching loop to completion (mutates machine_free/pending).

    Returns (assignments in commit order, accumulated weighted tardiness).
    Priorities are recomputed whenever they could have changed: on every new
    time instant for time-dependent rules, and after every commitment for
    rules reading machine availability (mr/pat). For other rules the cached
    scores are provably identical, so they are reused.
    """
    row_fn = comp.row_fn
    uses_time = comp.uses_time
    uses_mach = comp.uses_machine_state
    uses_pat = comp.uses_pat
    n = arr.n
    procf = arr.procf
    proci = arr.proci
    pminf = arr.pminf
    pavgf = arr.pavgf
    mpt = arr.mpt
    rel = arr.rel
    due = arr.due
    wt = arr.wt
    duef = arr.duef
    wtf = arr.wtf

    best_v = [0.0] * n
    best_m = [0] * n
    row_ok = [False] * n

    commits: list[Assignment] = []
    n_committed = 0
    tard = 0
    nu = len(unreleased)

    while True:
        if use_releases:
            while ui < nu and rel[unreleased[ui]] <= now:
                pending.append(unreleased[ui])
                ui += 1
        if pending:
            free_at_now = False
            for t in machine_free:
                if t <= now:
                    free_at_now = True
                    break
            if free_at_now:
                # refresh stale scores and pick the committable job with the
                # lowest priority value (ties: lowest job id)
                bj = -1
                bv = 0.0
                for j in pending:
                    if not row_ok[j]:
                        if uses_pat:
                            t = machine_free[mpt[j]] - now
                            pat = float(t) if t > 0 else 0.0
                        else:
                            pat = 0.0
                        best_v[j], best_m[j] = row_fn(
                            procf[j],
                            proci[j],
                            pminf[j],
                            pavgf[j],
                            pat,
                            float(now - rel[j]),
                            duef[j],
                            wtf[j],
                            due[j],
                            now,
                            machine_free,
                        )
                        row_ok[j] = True
                    if machine_free[best_m[j]] <= now:
                        v = best_v[j]
                        if bj < 0 or v < bv or (v == bv and j < bj):
                            bj = j
                            bv = v
                if bj >= 0:
                    i = best_m[bj]
                    done = now + proci[bj][i]
                    machine_free[i] = done
                    pending.remove(bj)
                    n_committed += 1
                    late = done - due[bj]
                    if late > 0:
                        tard += wt[bj] * late
                    if want_assignments or not commits:
                        commits.append(Assignment(bj, i, now, done))
                    if stop_after_first:
                        return commits, tard
                    if uses_mach:
                        for j in pending:
                            row_ok[j] = False
                    continue  # a fresh decision at the same instant
        elif not (use_releases and ui < nu):
            break  # nothing pending and nothing still to release

        # advance strictly to the next event: a machine completion or a release
        nt = -1
        for t in machine_free:
            if t > now and (nt < 0 or t < nt):
                nt = t
        if use_releases and ui < nu:
            rt = rel[unreleased[ui]]
            if nt < 0 or rt < nt:
                nt = rt
        if nt < 0:
            break
        now = nt
        if uses_time:
            for j in pending:
                row_ok[j] = False
    return commits, tard


def run_sgs(instance: Instance, rule: DispatchingRule) -> ScheduleResult:
    """Build the full schedule for ``instance`` under a single rule."""
    arr = _arrays(instance)
    comp = compile_rule(rule)
    commits, tard = _engine(
        arr,
        comp,
        machine_free=[0] * arr.m,
        pending=[],
        unreleased=arr.release_order,
        ui=0,
        now=0,
        use_releases=True,
    )
    commits.sort(key=lambda a: a.job)
    return ScheduleResult(commits, float(tard))


def initial_state(instance: Instance) -> SystemState:
    arr = _arrays(instance)
    return SystemState(
        now=0,
        machine_free=[0] * arr.m,
        released_pending=[],
        unreleased=list(arr.release_order),
        committed=[],
    )


def simulate_from(
    state: SystemState,
    instance: Instance,
    rule: DispatchingRule,
    horizon: str = "released_only",
) -> tuple[Assignment | None, float]:
    """Hypothetically finish the currently released work under ``rule``.

    Runs the dispatching loop on a copy of ``state`` with unreleased jobs
    ignored. Returns the first assignment the rule would commit (None when no
    job is pending) and the weighted tardiness accumulated by the simulated
    commitments only — tardiness of jobs already committed in ``state`` is
    not included. ``state`` is never mutated.
    """
    if horizon != "released_only":
        raise ValueError(f"unsupported simulation horizon {horizon!r}")
    arr = _arrays(instance)
    comp = compile_rule(rule)
    commits, tard = _engine(
        arr,
        comp,
        machine_free=list(state.machine_free),
        pending=list(state.released_pending),
        unreleased=(),
        ui=0,
        now=state.now,
        use_releases=False,
    )
    first = commits[0] if commits else None
    return first, float(tard)


def twt_of(assignments: list[Assignment], instance: Instance) -> float:
    """Total weighted tardiness of a complete schedule, exact integer math."""
    arr = _arrays(instance)
    seen = [False] * arr.n
    total = 0
    for a in assignments:
        if not 0 <= a.job < arr.n:
            raise ValueError(f"assignment references unknown job {a.job}")
        if seen[a.job]:
            raise ValueError(f"job {a.job} assigned more than once")
        seen[a.job] = True
        late = a.completion - arr.due[a.job]
        if late > 0:
            total += arr.wt[a.job] * late
    if not all(seen):
        missing = seen.index(False)
        raise ValueError(f"schedule is missing job {missing}")
    return float(total)
