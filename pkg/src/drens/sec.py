"""Random-sampling construction of rule ensembles.

A fixed number of candidate ensembles is drawn by uniformly sampling member
rules from an evolved pool; every candidate is scored on a validation set and
the best one wins. Sampling of all candidates happens before any evaluation,
so the drawn ensembles depend only on the seed, the pool size and the
configuration — never on evaluation order or parallelism.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .ensemble import Ensemble, Mode, run_ensemble
from .expr import DispatchingRule
from .instances import InstanceSet, ValidationError

__all__ = ["SECConfig", "construct", "evaluate_ensemble"]


@dataclass(frozen=True)
class SECConfig:
    num_candidates: int = 100
    size: int = 3
    mode: Mode = Mode.EDR_M
    seed: int = 0
    # sample members without replacement (an ensemble never repeats a rule);
    # turn off to allow duplicates inside one ensemble
    without_replacement: bool = True

    def validate(self) -> None:
        if self.num_candidates < 1:
            raise ValidationError(f"num_candidates must be >= 1, got {self.num_candidates}")
        if self.size < 1:
            raise ValidationError(f"ensemble size must be >= 1, got {self.size}")
        Mode(self.mode)


def evaluate_ensemble(ensemble: Ensemble, instances: InstanceSet) -> float:
    """Mean total weighted tardiness of the ensemble across ``instances``."""
    if not len(instances):
        raise ValueError("evaluate_ensemble needs at least one instance")
    total = 0.0
    for inst in instances:
        result, _ = run_ensemble(inst, ensemble)
        total += result.twt
    return total / len(instances)


def _evaluate_one(payload):
    ensemble, instances = payload
    return evaluate_ensemble(ensemble, instances)


def construct(
    pool: Sequence[DispatchingRule],
    config: SECConfig,
    validation: InstanceSet,
    jobs: int = 1,
) -> tuple[Ensemble, list[tuple[Ensemble, float]]]:
    """Draw candidates, score them on ``validation``, return the winner.

    Returns ``(best, scored)`` where ``scored`` lists every candidate with its
    validation score in construction order. Ties keep the earliest candidate.
    """
    config.validate()
    if not pool:
        raise ValidationError("rule pool is empty")
    if config.without_replacement and config.size > len(pool):
        raise ValidationError(
            f"ensemble size {config.size} exceeds pool of {len(pool)} rules "
            "(sampling is without replacement)"
        )
    if not len(validation):
        raise ValueError("construct needs a non-empty validation set")

    rng = random.Random(config.seed)
    candidates: list[Ensemble] = []
    for _ in range(config.num_candidates):
        if config.without_replacement:
            members = rng.sample(range(len(pool)), config.size)
        else:
            members = [rng.randrange(len(pool)) for _ in range(config.size)]
        candidates.append(Ensemble([pool[i] for i in members], config.mode))

    if jobs > 1 and len(candidates) > 1:
        import multiprocessing

        with multiprocessing.Pool(jobs) as pool_:
            scores = pool_.map(_evaluate_one, [(c, validation) for c in candidates])
    else:
        scores = [evaluate_ensemble(c, validation) for c in candidates]

    best_i = 0
    for i in range(1, len(scores)):
        if scores[i] < scores[best_i]:  # strict: ties keep the earliest draw
            best_i = i
    return candidates[best_i], list(zip(candidates, scores))
