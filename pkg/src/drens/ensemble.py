"""Ensembles of dispatching rules coordinated by per-decision simulation.

At every decision point of the real schedule each member rule is asked, via a
fast internal simulation of the currently released work, what it would do and
how that plays out. The member whose simulated outlook is best makes the real
decision. Two outlooks are supported:

* ``EDR_S`` — score a member by the weighted tardiness of the single next
  assignment it would commit (myopic, cheap).
* ``EDR_M`` — score a member by the total weighted tardiness of finishing all
  currently released work under that member alone (deeper look-ahead).

The winning member's first simulated assignment is executed in the real
schedule when it starts at the current instant; otherwise the clock simply
advances to the next event and the members are polled again.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

from .expr import DispatchingRule, compile_rule, parse, serialize
from .instances import Instance
from .sim import Assignment, ScheduleResult, SystemState, _arrays, _engine

__all__ = [
    "Mode",
    "Ensemble",
    "EnsembleDecision",
    "EnsembleTrace",
    "run_ensemble",
    "score_rules",
    "save_ensemble",
    "load_ensemble",
]


class Mode(str, enum.Enum):
    EDR_S = "EDR_S"
    EDR_M = "EDR_M"


@dataclass(slots=True)
class Ensemble:
    rules: list[DispatchingRule]
    mode: Mode

    def __post_init__(self) -> None:
        if not self.rules:
            raise ValueError("an ensemble needs at least one rule")
        self.mode = Mode(self.mode)

    def __len__(self) -> int:
        return len(self.rules)


@dataclass(frozen=True, slots=True)
class EnsembleDecision:
    time: int
    scores: tuple[float, ...]  # one simulated score per member, member order
    chosen: int  # index of the winning member
    assignment: Assignment


@dataclass(slots=True)
class EnsembleTrace:
    decisions: list[EnsembleDecision] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.decisions)


def _poll(arr, comps, machine_free, pending, now, myopic):
    """Simulate every member from the given state; return (scores, firsts)."""
    scores: list[float] = []
    firsts: list[Assignment] = []
    for comp in comps:
        commits, tard = _engine(
            arr,
            comp,
            machine_free=list(machine_free),
            pending=list(pending),
            unreleased=(),
            ui=0,
            now=now,
            use_releases=False,
            stop_after_first=myopic,
            want_assignments=False,
        )
        scores.append(float(tard))
        firsts.append(commits[0])
    return scores, firsts


def run_ensemble(instance: Instance, ensemble: Ensemble) -> tuple[ScheduleResult, EnsembleTrace]:
    """Build the full schedule for ``instance`` under ensemble collaboration."""
    arr = _arrays(instance)
    comps = [compile_rule(r) for r in ensemble.rules]
    myopic = ensemble.mode is Mode.EDR_S

    machine_free = [0] * arr.m
    pending: list[int] = []
    unreleased = arr.release_order
    nu = len(unreleased)
    ui = 0
    now = 0
    commits: list[Assignment] = []
    tard = 0
    decisions: list[EnsembleDecision] = []

    while True:
        while ui < nu and arr.rel[unreleased[ui]] <= now:
            pending.append(unreleased[ui])
            ui += 1
        if pending:
            free_at_now = any(t <= now for t in machine_free)
            if free_at_now:
                scores, firsts = _poll(arr, comps, machine_free, pending, now, myopic)
                kb = 0
                for k in range(1, len(scores)):
                    if scores[k] < scores[kb]:  # strict: ties keep the lowest index
                        kb = k
                a = firsts[kb]
                if a.start == now:
                    # execute the winner's move in the real schedule
                    machine_free[a.machine] = a.completion
                    pending.remove(a.job)
                    commits.append(a)
                    late = a.completion - arr.due[a.job]
                    if late > 0:
                        tard += arr.wt[a.job] * late
                    decisions.append(EnsembleDecision(now, tuple(scores), kb, a))
                    continue
                # the winner would rather wait for a busy machine: advance
        elif ui >= nu:
            break

        nt = -1
        for t in machine_free:
            if t > now and (nt < 0 or t < nt):
                nt = t
        if ui < nu:
            rt = arr.rel[unreleased[ui]]
            if nt < 0 or rt < nt:
                nt = rt
        if nt < 0:
            break
        now = nt

    commits.sort(key=lambda a: a.job)
    return ScheduleResult(commits, float(tard)), EnsembleTrace(decisions)


def score_rules(state: SystemState, instance: Instance, ensemble: Ensemble) -> list[float]:
    """Each member's simulated score at a decision point of ``state``."""
    if not state.released_pending:
        raise ValueError("not a decision point: no job is pending")
    if not any(t <= state.now for t in state.machine_free):
        raise ValueError("not a decision point: no machine is free")
    arr = _arrays(instance)
    comps = [compile_rule(r) for r in ensemble.rules]
    scores, _ = _poll(
        arr,
        comps,
        state.machine_free,
        state.released_pending,
        state.now,
        ensemble.mode is Mode.EDR_S,
    )
    return scores


def save_ensemble(ensemble: Ensemble, path: str | Path) -> None:
    """Write an ensemble file: a mode line, then one rule expression per line."""
    path = Path(path)
    lines = [f"mode={ensemble.mode.value}"]
    lines.extend(serialize(rule.root) for rule in ensemble.rules)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_ensemble(path: str | Path, labels: list[str] | None = None) -> Ensemble:
    """Read an ensemble file produced by :func:`save_ensemble`.

    ``labels`` optionally assigns a label to each member, in file order.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"ensemble file not found: {path}")
    raw = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in raw if ln]
    if not lines or not lines[0].startswith("mode="):
        raise ValueError(f"{path}: first line must be 'mode=<EDR_S|EDR_M>'")
    mode_text = lines[0].split("=", 1)[1].strip()
    try:
        mode = Mode(mode_text)
    except ValueError:
        raise ValueError(f"{path}: unknown ensemble mode {mode_text!r}") from None
    members = lines[1:]
    if labels is not None and len(labels) != len(members):
        raise ValueError(f"{path}: got {len(labels)} labels for {len(members)} rules")
    rules = []
    for idx, text in enumerate(members):
        label = labels[idx] if labels is not None else ""
        rules.append(DispatchingRule(parse(text).root, label=label))
    return Ensemble(rules, mode)
