"""Steady-state genetic programming over dispatching-rule expression trees.

Each individual is a priority expression. Fitness is the mean total weighted
tardiness the rule achieves over a training set (lower is better). One
generation step draws three distinct individuals, breeds the best two and
overwrites the worst with the child. The evaluation budget is exact: the
initial population costs ``pop_size`` evaluations and every step costs one.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .expr import (
    BINARY_KINDS,
    TERMINALS,
    DispatchingRule,
    ExprNode,
    NodeKind,
    _compile_node,
    depth,
    serialize,
    size,
)
from .instances import InstanceSet, ValidationError
from .sim import _arrays, _engine, run_sgs

__all__ = [
    "CROSSOVERS",
    "MUTATIONS",
    "GPConfig",
    "EvolveResult",
    "random_tree",
    "init_population",
    "fitness",
    "tournament_step",
    "evolve",
    "subtree_crossover",
    "uniform_crossover",
    "context_crossover",
    "size_fair_crossover",
    "subtree_mutation",
    "hoist_mutation",
    "complement_mutation",
    "replacement_mutation",
    "permutation_mutation",
    "shrink_mutation",
]

CROSSOVERS = ("subtree", "uniform", "context", "size_fair")
MUTATIONS = ("subtree", "hoist", "complement", "replacement", "permutation", "shrink")

_FUNCTIONS = (NodeKind.ADD, NodeKind.SUB, NodeKind.MUL, NodeKind.DIV, NodeKind.POS)
_COMPLEMENT = {
    NodeKind.ADD: NodeKind.SUB,
    NodeKind.SUB: NodeKind.ADD,
    NodeKind.MUL: NodeKind.DIV,
    NodeKind.DIV: NodeKind.MUL,
}


@dataclass(frozen=True)
class GPConfig:
    pop_size: int = 1000
    max_evals: int = 80000
    max_depth: int = 5
    mutation_prob: float = 0.3
    crossovers: tuple[str, ...] = CROSSOVERS
    mutations: tuple[str, ...] = MUTATIONS
    seed: int = 0

    def validate(self) -> None:
        if self.pop_size < 3:
            raise ValidationError(f"pop_size must be >= 3 (tournament of 3), got {self.pop_size}")
        if self.max_evals < self.pop_size:
            raise ValidationError(
                f"max_evals ({self.max_evals}) must cover the initial population "
                f"({self.pop_size} evaluations)"
            )
        if self.max_depth < 1:
            raise ValidationError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValidationError(f"mutation_prob must be in [0, 1], got {self.mutation_prob}")
        for name in self.crossovers:
            if name not in _XO:
                raise ValidationError(f"unknown crossover operator {name!r}")
        for name in self.mutations:
            if name not in _MUT:
                raise ValidationError(f"unknown mutation operator {name!r}")
        if not self.crossovers:
            raise ValidationError("at least one crossover operator is required")
        if not self.mutations:
            raise ValidationError("at least one mutation operator is required")


@dataclass
class EvolveResult:
    best: DispatchingRule
    best_fitness: float
    evaluations: int
    # (evaluation count, best fitness so far) — first entry after the initial
    # population, then one entry per strict improvement
    log: list[tuple[int, float]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# tree construction


def _random_terminal(rng: random.Random) -> ExprNode:
    return ExprNode(NodeKind.TERMINAL, terminal=rng.choice(TERMINALS))


def _arity(kind: NodeKind) -> int:
    return 1 if kind is NodeKind.POS else 2


def _full_tree(rng: random.Random, depth_left: int) -> ExprNode:
    if depth_left <= 0:
        return _random_terminal(rng)
    kind = rng.choice(_FUNCTIONS)
    kids = tuple(_full_tree(rng, depth_left - 1) for _ in range(_arity(kind)))
    return ExprNode(kind, children=kids)


def _grow_tree(rng: random.Random, depth_left: int, at_root: bool = False) -> ExprNode:
    if depth_left <= 0 or (not at_root and rng.random() < 0.5):
        return _random_terminal(rng)
    kind = rng.choice(_FUNCTIONS)
    kids = tuple(_grow_tree(rng, depth_left - 1) for _ in range(_arity(kind)))
    return ExprNode(kind, children=kids)


def random_tree(rng: random.Random, max_depth: int, full: bool) -> ExprNode:
    """A fresh tree of depth <= max_depth whose root is a function node."""
    if max_depth < 1:
        raise ValidationError("random_tree needs max_depth >= 1 for a function root")
    return _full_tree(rng, max_depth) if full else _grow_tree(rng, max_depth, at_root=True)


def init_population(config: GPConfig, rng: random.Random) -> list[ExprNode]:
    """Ramped half-and-half: depths 2..max_depth crossed with full/grow."""
    lo = min(2, config.max_depth)
    combos = [
        (d, full) for d in range(lo, config.max_depth + 1) for full in (True, False)
    ]
    pop = []
    for i in range(config.pop_size):
        d, full = combos[i % len(combos)]
        pop.append(random_tree(rng, d, full))
    return pop


# ---------------------------------------------------------------------------
# node addressing (paths are child-index tuples from the root)


def _paths(node: ExprNode, prefix: tuple[int, ...] = ()):
    yield prefix, node
    for i, child in enumerate(node.children):
        yield from _paths(child, prefix + (i,))


def _get(node: ExprNode, path: tuple[int, ...]) -> ExprNode:
    for i in path:
        node = node.children[i]
    return node


def _replace(node: ExprNode, path: tuple[int, ...], new: ExprNode) -> ExprNode:
    if not path:
        return new
    kids = list(node.children)
    kids[path[0]] = _replace(kids[path[0]], path[1:], new)
    return ExprNode(node.kind, terminal=node.terminal, children=tuple(kids))


# ---------------------------------------------------------------------------
# crossover operators (trees are immutable, so parents are never damaged)


def subtree_crossover(rng: random.Random, a: ExprNode, b: ExprNode) -> ExprNode:
    """Replace a random subtree of ``a`` with a random subtree of ``b``."""
    target = rng.choice([p for p, _ in _paths(a)])
    donor = rng.choice([n for _, n in _paths(b)])
    return _replace(a, target, donor)


def uniform_crossover(rng: random.Random, a: ExprNode, b: ExprNode) -> ExprNode:
    """Mix the parents position by position inside their common region.

    While both parents have the same arity at a position the child takes the
    node label from either parent (fair coin) and recursion continues on the
    paired children; where the arities diverge, one parent's whole subtree is
    taken.
    """

    def mix(x: ExprNode, y: ExprNode) -> ExprNode:
        if len(x.children) != len(y.children):
            return x if rng.random() < 0.5 else y
        pick = x if rng.random() < 0.5 else y
        if not x.children:
            return pick
        kids = tuple(mix(cx, cy) for cx, cy in zip(x.children, y.children))
        return ExprNode(pick.kind, terminal=pick.terminal, children=kids)

    return mix(a, b)


def context_crossover(rng: random.Random, a: ExprNode, b: ExprNode) -> ExprNode:
    """Graft a subtree of ``b`` into ``a`` at a position both trees possess."""
    b_paths = {p for p, _ in _paths(b)}
    common = [p for p, _ in _paths(a) if p in b_paths]
    target = rng.choice(common)  # the root path () is always shared
    return _replace(a, target, _get(b, target))


def size_fair_crossover(rng: random.Random, a: ExprNode, b: ExprNode) -> ExprNode:
    """Like subtree crossover, but the donor matches the removed size best."""
    target = rng.choice([p for p, _ in _paths(a)])
    want = size(_get(a, target))
    nodes_b = [n for _, n in _paths(b)]
    best_gap = min(abs(size(n) - want) for n in nodes_b)
    donor = rng.choice([n for n in nodes_b if abs(size(n) - want) == best_gap])
    return _replace(a, target, donor)


# ---------------------------------------------------------------------------
# mutation operators


def subtree_mutation(rng: random.Random, a: ExprNode, max_depth: int) -> ExprNode:
    """Regrow a random subtree within the remaining depth budget."""
    target = rng.choice([p for p, _ in _paths(a)])
    budget = max_depth - len(target)
    fresh = _random_terminal(rng) if budget <= 0 else _grow_tree(rng, budget)
    return _replace(a, target, fresh)


def hoist_mutation(rng: random.Random, a: ExprNode, max_depth: int = 0) -> ExprNode:
    """Promote a random proper subtree to be the whole tree."""
    proper = [p for p, _ in _paths(a) if p]
    if not proper:
        return a
    return _get(a, rng.choice(proper))


def complement_mutation(rng: random.Random, a: ExprNode, max_depth: int = 0) -> ExprNode:
    """Swap one arithmetic node for its complement: +/- or */÷."""
    spots = [p for p, n in _paths(a) if n.kind in _COMPLEMENT]
    if not spots:
        return a
    path = rng.choice(spots)
    node = _get(a, path)
    return _replace(a, path, ExprNode(_COMPLEMENT[node.kind], children=node.children))


def replacement_mutation(rng: random.Random, a: ExprNode, max_depth: int = 0) -> ExprNode:
    """Relabel one node with a different symbol of the same arity."""
    path = rng.choice([p for p, _ in _paths(a)])
    node = _get(a, path)
    if node.kind is NodeKind.TERMINAL:
        alts = [t for t in TERMINALS if t is not node.terminal]
        return _replace(a, path, ExprNode(NodeKind.TERMINAL, terminal=rng.choice(alts)))
    if node.kind is NodeKind.POS:
        return a  # the only unary symbol: nothing to swap in
    alts = [k for k in BINARY_KINDS if k is not node.kind]
    return _replace(a, path, ExprNode(rng.choice(alts), children=node.children))


def permutation_mutation(rng: random.Random, a: ExprNode, max_depth: int = 0) -> ExprNode:
    """Swap the operands of one binary node."""
    spots = [p for p, n in _paths(a) if len(n.children) == 2]
    if not spots:
        return a
    path = rng.choice(spots)
    node = _get(a, path)
    swapped = (node.children[1], node.children[0])
    return _replace(a, path, ExprNode(node.kind, children=swapped))


def shrink_mutation(rng: random.Random, a: ExprNode, max_depth: int = 0) -> ExprNode:
    """Collapse a random subtree to a single random terminal."""
    path = rng.choice([p for p, _ in _paths(a)])
    return _replace(a, path, _random_terminal(rng))


_XO = {
    "subtree": subtree_crossover,
    "uniform": uniform_crossover,
    "context": context_crossover,
    "size_fair": size_fair_crossover,
}
_MUT = {
    "subtree": subtree_mutation,
    "hoist": hoist_mutation,
    "complement": complement_mutation,
    "replacement": replacement_mutation,
    "permutation": permutation_mutation,
    "shrink": shrink_mutation,
}


def _bounded_crossover(rng, op, a, b, max_depth):
    # subtree and size-fair grafts can overshoot the depth cap; retry with
    # fresh draws up to five times, then fall back to a copy of parent a
    child = op(rng, a, b)
    for _ in range(5):
        if depth(child) <= max_depth:
            return child
        child = op(rng, a, b)
    return child if depth(child) <= max_depth else a


# ---------------------------------------------------------------------------
# evolution loop


def fitness(rule: DispatchingRule, instances: InstanceSet) -> float:
    """Mean total weighted tardiness of ``rule`` across ``instances``."""
    if not len(instances):
        raise ValueError("fitness needs at least one instance")
    return sum(run_sgs(inst, rule).twt for inst in instances) / len(instances)


def _make_eval(instances):
    arrs = [_arrays(inst) for inst in instances]
    n_inst = len(arrs)
    # identical trees have identical fitness; steady-state breeding produces
    # plenty of repeats, so remember scores by canonical text (budget
    # bookkeeping is unaffected: a repeat still counts as an evaluation)
    memo: dict[str, float] = {}

    def eval_tree(tree: ExprNode) -> float:
        key = serialize(tree)
        known = memo.get(key)
        if known is not None:
            return known
        comp = _compile_node(tree)
        total = 0
        for arr in arrs:
            _, tard = _engine(
                arr,
                comp,
                machine_free=[0] * arr.m,
                pending=[],
                unreleased=arr.release_order,
                ui=0,
                now=0,
                use_releases=True,
                want_assignments=False,
            )
            total += tard
        score = total / n_inst
        memo[key] = score
        return score

    return eval_tree


def tournament_step(pop, fits, rng: random.Random, config: GPConfig, eval_tree) -> tuple[int, float]:
    """One steady-state step; returns (replaced slot, child fitness).

    Three distinct individuals are drawn; ranked by (fitness, draw order) the
    two best become parents a and b and the worst is overwritten by their
    child, unconditionally. The child always comes from a crossover and then
    passes through a mutation with probability ``mutation_prob``.
    """
    picks = rng.sample(range(len(pop)), 3)
    ranked = sorted(range(3), key=lambda t: (fits[picks[t]], t))
    parent_a = pop[picks[ranked[0]]]
    parent_b = pop[picks[ranked[1]]]
    worst_slot = picks[ranked[2]]

    xo = _XO[rng.choice(config.crossovers)]
    child = _bounded_crossover(rng, xo, parent_a, parent_b, config.max_depth)
    if rng.random() < config.mutation_prob:
        child = _MUT[rng.choice(config.mutations)](rng, child, config.max_depth)

    score = eval_tree(child)
    pop[worst_slot] = child
    fits[worst_slot] = score
    return worst_slot, score


def evolve(config: GPConfig, train: InstanceSet) -> EvolveResult:
    """Run GP to the exact evaluation budget; returns the best rule found."""
    config.validate()
    if not len(train):
        raise ValueError("evolve needs a non-empty training set")
    rng = random.Random(config.seed)
    eval_tree = _make_eval(train)

    pop = init_population(config, rng)
    fits = [eval_tree(t) for t in pop]
    evaluations = config.pop_size

    best_slot = min(range(len(pop)), key=lambda i: (fits[i], i))
    best_tree, best_fit = pop[best_slot], fits[best_slot]
    log = [(evaluations, best_fit)]

    while evaluations < config.max_evals:
        slot, score = tournament_step(pop, fits, rng, config, eval_tree)
        evaluations += 1
        if score < best_fit:
            best_tree, best_fit = pop[slot], score
            log.append((evaluations, score))

    rule = DispatchingRule(best_tree, label=f"gp_seed{config.seed}")
    return EvolveResult(rule, best_fit, evaluations, log)
