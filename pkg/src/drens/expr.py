"""Priority-function expression trees for dispatching rules.

A rule is a small arithmetic tree over job/machine scheduling attributes.
Lower priority value = scheduled earlier. Trees serialize to prefix
S-expressions like ``(/ (+ pt pavg) (pos sl))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

__all__ = [
    "NodeKind",
    "Terminal",
    "ExprNode",
    "DispatchingRule",
    "EvalContext",
    "ParseError",
    "parse",
    "serialize",
    "evaluate",
    "depth",
    "size",
    "TERMINALS",
    "BINARY_KINDS",
]

_INF = math.inf


class NodeKind(enum.Enum):
    ADD = "+"
    SUB = "-"
    MUL = "*"
    DIV = "/"
    POS = "pos"
    TERMINAL = "term"


class Terminal(enum.Enum):
    """Leaf attributes available to a rule.

    pt    processing time of the job on the machine being scored
    pmin  shortest processing time of the job over all machines
    pavg  mean processing time of the job over all machines
    pat   waiting time until the job's fastest machine becomes free
    mr    waiting time until the machine being scored becomes free
    age   time the job has been waiting since its release
    dd    absolute due date of the job
    w     weight of the job
    sl    negative part of the job's slack: -max(dd - pt - now, 0)
    """

    PT = "pt"
    PMIN = "pmin"
    PAVG = "pavg"
    PAT = "pat"
    MR = "mr"
    AGE = "age"
    DD = "dd"
    W = "w"
    SL = "sl"


TERMINALS: tuple[Terminal, ...] = tuple(Terminal)
BINARY_KINDS: tuple[NodeKind, ...] = (
    NodeKind.ADD,
    NodeKind.SUB,
    NodeKind.MUL,
    NodeKind.DIV,
)

_ARITY = {
    NodeKind.ADD: 2,
    NodeKind.SUB: 2,
    NodeKind.MUL: 2,
    NodeKind.DIV: 2,
    NodeKind.POS: 1,
    NodeKind.TERMINAL: 0,
}

_SYMBOL_TO_KIND = {k.value: k for k in NodeKind if k is not NodeKind.TERMINAL}
_TOKEN_TO_TERMINAL = {t.value: t for t in Terminal}


@dataclass(frozen=True, slots=True)
class ExprNode:
    kind: NodeKind
    terminal: Terminal | None = None
    children: tuple["ExprNode", ...] = ()

    def __post_init__(self) -> None:
        if self.kind is NodeKind.TERMINAL:
            if self.terminal is None or self.children:
                raise ValueError("terminal node must carry a terminal and no children")
        else:
            if self.terminal is not None:
                raise ValueError(f"{self.kind.name} node cannot carry a terminal")
            if len(self.children) != _ARITY[self.kind]:
                raise ValueError(
                    f"{self.kind.name} expects {_ARITY[self.kind]} children, "
                    f"got {len(self.children)}"
                )


@dataclass(frozen=True, slots=True)
class DispatchingRule:
    """An immutable priority rule with an optional provenance label."""

    root: ExprNode
    label: str = ""


@dataclass(slots=True)
class EvalContext:
    """One (job, machine) scoring context at a simulation decision point."""

    job: int
    machine: int
    now: int
    machine_free: Sequence[int]
    instance: "object"  # drens.instances.Instance; duck-typed to avoid an import cycle


class ParseError(ValueError):
    """Malformed rule text; carries the character offset of the problem."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


def depth(node: ExprNode) -> int:
    """Depth of the tree rooted at ``node``; a lone node has depth 0."""
    if not node.children:
        return 0
    return 1 + max(depth(c) for c in node.children)


def size(node: ExprNode) -> int:
    return 1 + sum(size(c) for c in node.children)


# ---------------------------------------------------------------------------
# serialization


def _serialize_node(node: ExprNode, out: list[str]) -> None:
    if node.kind is NodeKind.TERMINAL:
        out.append(node.terminal.value)
        return
    out.append("(")
    out.append(node.kind.value)
    for child in node.children:
        out.append(" ")
        _serialize_node(child, out)
    out.append(")")


def serialize(rule: DispatchingRule | ExprNode) -> str:
    """Canonical prefix form: single spaces, lowercase symbols."""
    node = rule.root if isinstance(rule, DispatchingRule) else rule
    parts: list[str] = []
    _serialize_node(node, parts)
    return "".join(parts)


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    return tokens


def parse(text: str, label: str = "") -> DispatchingRule:
    """Parse a prefix S-expression into a rule.

    Accepts symbols case-insensitively; raises :class:`ParseError` with the
    offending character position for unknown symbols, arity mismatches and
    unbalanced parentheses.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty rule text", 0)
    pos = 0

    def parse_expr() -> ExprNode:
        nonlocal pos
        tok, at = tokens[pos]
        if tok == ")":
            raise ParseError("unexpected ')'", at)
        if tok == "(":
            pos += 1
            if pos >= len(tokens):
                raise ParseError("unbalanced parentheses", at)
            op_tok, op_at = tokens[pos]
            kind = _SYMBOL_TO_KIND.get(op_tok.lower())
            if kind is None:
                raise ParseError(f"unknown operator {op_tok!r}", op_at)
            pos += 1
            children: list[ExprNode] = []
            while True:
                if pos >= len(tokens):
                    raise ParseError("unbalanced parentheses", at)
                if tokens[pos][0] == ")":
                    pos += 1
                    break
                children.append(parse_expr())
            if len(children) != _ARITY[kind]:
                raise ParseError(
                    f"operator {op_tok!r} expects {_ARITY[kind]} arguments, "
                    f"got {len(children)}",
                    op_at,
                )
            return ExprNode(kind, children=tuple(children))
        term = _TOKEN_TO_TERMINAL.get(tok.lower())
        if term is None:
            raise ParseError(f"unknown symbol {tok!r}", at)
        pos += 1
        return ExprNode(NodeKind.TERMINAL, terminal=term)

    root = parse_expr()
    if pos != len(tokens):
        raise ParseError(f"trailing input {tokens[pos][0]!r}", tokens[pos][1])
    return DispatchingRule(root, label=label)


# ---------------------------------------------------------------------------
# evaluation
#
# Rules are compiled once per distinct expression into a plain Python function
# f(pt, pmin, pavg, pat, mr, age, dd, w, sl) -> float; the scheduling
# simulator calls that function in its inner loop.  Semantics:
#   DIV(a, b) = 1 if b == 0 else a / b      (protected division)
#   POS(a)    = 0 if a < 0 else a
# A non-finite result (overflow cascade, inf - inf, ...) collapses to +inf,
# which sorts last under argmin, i.e. the worst possible priority.

_ARG_NAMES = ("pt", "pmin", "pavg", "pat", "mr", "age", "dd", "w", "sl")


@dataclass(frozen=True)
class CompiledRule:
    fn: Callable[..., float]
    # row_fn scores one job on every machine in a single call and returns
    # (best value, best machine); see _compile_node for its signature
    row_fn: Callable[..., tuple[float, int]]
    uses_time: bool  # any of age/sl/mr/pat: value depends on the current time
    uses_machine_state: bool  # any of mr/pat: value depends on machine_free
    uses_pat: bool  # needs the fastest machine's availability precomputed
    source: str = field(repr=False, default="")


def _terminals_in(node: ExprNode, acc: set[Terminal]) -> None:
    if node.kind is NodeKind.TERMINAL:
        acc.add(node.terminal)
    for c in node.children:
        _terminals_in(c, acc)


def _emit(node: ExprNode, lines: list[str], counter: list[int]) -> str:
    if node.kind is NodeKind.TERMINAL:
        return node.terminal.value
    args = [_emit(c, lines, counter) for c in node.children]
    name = f"v{counter[0]}"
    counter[0] += 1
    if node.kind is NodeKind.POS:
        lines.append(f"{name} = 0.0 if {args[0]} < 0.0 else {args[0]}")
    elif node.kind is NodeKind.DIV:
        lines.append(f"{name} = 1.0 if {args[1]} == 0.0 else {args[0]} / {args[1]}")
    else:
        op = node.kind.value
        lines.append(f"{name} = {args[0]} {op} {args[1]}")
    return name


def _compile_node(root: ExprNode) -> CompiledRule:
    lines: list[str] = []
    result = _emit(root, lines, [0])
    used: set[Terminal] = set()
    _terminals_in(root, used)

    body = "".join(f"    {ln}\n" for ln in lines)
    src = (
        f"def _pf({', '.join(_ARG_NAMES)}):\n"
        f"{body}"
        f"    return {result} if _isfinite({result}) else _INF\n"
    )

    # A second entry point scores one job across all machines per call; the
    # per-machine terminals (pt, mr, sl) are materialized inside the loop and
    # only when the expression reads them.
    per_machine = {Terminal.PT, Terminal.MR, Terminal.SL}
    row_args = "rowf, rowi, pmin, pavg, pat, age, dd, w, due, now, machine_free"
    if used & per_machine:
        cell: list[str] = []
        if Terminal.MR in used:
            cell.append("t = machine_free[i] - now")
            cell.append("mr = float(t) if t > 0 else 0.0")
        if Terminal.SL in used:
            cell.append("s = due - rowi[i] - now")
            cell.append("sl = -float(s) if s > 0 else 0.0")
        cell.extend(lines)
        # accept only strictly better AND finite values (x - x == 0.0 holds
        # exactly for finite x); non-finite scores rank worst, like +inf
        cell.append(f"if {result} < bv and {result} - {result} == 0.0:")
        cell.append(f"    bv = {result}")
        cell.append("    bm = i")
        cell_body = "".join(f"        {ln}\n" for ln in cell)
        row_src = (
            f"def _prow({row_args}):\n"
            f"    bv = _INF\n"
            f"    bm = 0\n"
            f"    i = 0\n"
            f"    for pt in rowf:\n"
            f"{cell_body}"
            f"        i += 1\n"
            f"    return bv, bm\n"
        )
    else:
        # machine-invariant expression: one evaluation covers every machine,
        # and the lowest machine index wins the all-way tie
        row_src = (
            f"def _prow({row_args}):\n"
            f"{body}"
            f"    return ({result} if _isfinite({result}) else _INF), 0\n"
        )

    ns: dict[str, object] = {"_isfinite": math.isfinite, "_INF": _INF}
    exec(compile(src + row_src, "<rule>", "exec"), ns)  # noqa: S102 - closed grammar
    time_dep = {Terminal.AGE, Terminal.SL, Terminal.MR, Terminal.PAT}
    machine_dep = {Terminal.MR, Terminal.PAT}
    return CompiledRule(
        fn=ns["_pf"],
        row_fn=ns["_prow"],
        uses_time=bool(used & time_dep),
        uses_machine_state=bool(used & machine_dep),
        uses_pat=Terminal.PAT in used,
        source=src + row_src,
    )


@lru_cache(maxsize=4096)
def _compile_text(text: str) -> CompiledRule:
    return _compile_node(parse(text).root)


def compile_rule(rule: DispatchingRule) -> CompiledRule:
    return _compile_text(serialize(rule))


def _as_float(x) -> float:
    # int -> float conversion that cannot fault on arbitrarily large values
    try:
        return float(x)
    except OverflowError:
        return _INF if x > 0 else -_INF


def evaluate(rule: DispatchingRule, ctx: EvalContext) -> float:
    """Score one (job, machine) pair; total, never raises on any context."""
    job = ctx.instance.jobs[ctx.job]
    proc = job.proc_times
    now = ctx.now
    p = _as_float(proc[ctx.machine])
    pmin = _as_float(min(proc))
    pavg = _as_float(sum(proc) / len(proc))
    # fastest machine for the job; ties go to the lowest machine index
    fastest = min(range(len(proc)), key=lambda i: (proc[i], i))
    pat = _as_float(max(ctx.machine_free[fastest] - now, 0))
    mr = _as_float(max(ctx.machine_free[ctx.machine] - now, 0))
    age = _as_float(now - job.release)
    dd = _as_float(job.due)
    w = _as_float(job.weight)
    slack = job.due - proc[ctx.machine] - now
    sl = _as_float(-slack if slack > 0 else 0)
    return compile_rule(rule).fn(p, pmin, pavg, pat, mr, age, dd, w, sl)
