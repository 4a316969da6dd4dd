"""Nonparametric comparison of schedulers plus result bookkeeping.

The two tests are two-sided and tie-aware. For small samples they compute
exact permutation p-values by full enumeration; beyond that they switch to
the usual large-sample approximations (normal with tie and continuity
correction for the rank-sum test, chi-square with tie correction for the
k-sample test). Everything here is pure stdlib so results are reproducible
bit for bit across environments.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "RunRecord",
    "aggregate",
    "mann_whitney",
    "kruskal_wallis",
    "bonferroni",
    "frequency",
    "timing",
    "read_results",
    "write_results",
    "MW_EXACT_MAX_N",
    "KW_EXACT_MAX_N",
]

# combined-sample sizes up to which the exact permutation distribution is
# enumerated (c(16,8)=12870 subsets; 13 positions over three groups ~ 1e5)
MW_EXACT_MAX_N = 16
KW_EXACT_MAX_N = 13

_EPS = 1e-9


@dataclass(frozen=True)
class RunRecord:
    method: str
    rep: int
    score: float
    seconds: float = 0.0


def aggregate(scores: Sequence[float]) -> tuple[float, float, float]:
    """(min, median, max) of a non-empty score list."""
    if not scores:
        raise ValueError("aggregate needs at least one score")
    return (min(scores), float(statistics.median(scores)), max(scores))


# ---------------------------------------------------------------------------
# ranking machinery


def _midranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the average of their rank span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j + 2) / 2.0  # average of 1-based positions i+1 .. j+1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def _tie_term(values: Sequence[float]) -> float:
    """sum of t^3 - t over groups of tied values."""
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return float(sum(t**3 - t for t in counts.values() if t > 1))


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution (df >= 1)."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if x <= 0.0:
        return 1.0
    y = x / 2.0
    if df % 2 == 0:
        # survival = exp(-y) * sum_{i<df/2} y^i / i!
        term = math.exp(-y)
        total = term
        for i in range(1, df // 2):
            term *= y / i
            total += term
        return min(1.0, total)
    # odd df: start from Q(1/2, y) = erfc(sqrt(y)), then step a -> a+1
    q = math.erfc(math.sqrt(y))
    a = 0.5
    for _ in range((df - 1) // 2):
        q += math.exp(a * math.log(y) - y - math.lgamma(a + 1.0))
        a += 1.0
    return min(1.0, q)


# ---------------------------------------------------------------------------
# two-sample rank-sum test


def mann_whitney(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided rank-sum test; returns (U, p).

    U counts pairs where a beats b (ties count half). Combined samples of at
    most MW_EXACT_MAX_N observations get an exact permutation p-value;
    larger samples use the normal approximation with tie and continuity
    corrections.
    """
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise ValueError("mann_whitney needs non-empty samples")
    u_stat = 0.0
    for x in a:
        for y in b:
            if x > y:
                u_stat += 1.0
            elif x == y:
                u_stat += 0.5
    mu = n1 * n2 / 2.0
    n = n1 + n2
    if n <= MW_EXACT_MAX_N:
        ranks = _midranks(list(a) + list(b))
        offset = n1 * (n1 + 1) / 2.0
        threshold = abs(u_stat - mu) - _EPS
        hits = 0
        total = 0
        for subset in combinations(range(n), n1):
            u_perm = sum(ranks[i] for i in subset) - offset
            if abs(u_perm - mu) >= threshold:
                hits += 1
            total += 1
        return u_stat, hits / total

    pooled = list(a) + list(b)
    tie_sum = _tie_term(pooled)
    var = (n1 * n2 / 12.0) * ((n + 1) - tie_sum / (n * (n - 1)))
    if var <= 0.0:
        return u_stat, 1.0
    z = (abs(u_stat - mu) - 0.5) / math.sqrt(var)
    if z < 0.0:
        z = 0.0
    return u_stat, min(1.0, 2.0 * _normal_sf(z))


# ---------------------------------------------------------------------------
# k-sample rank test


def _h_numerator(rank_sums: Iterable[float], sizes: Sequence[int]) -> float:
    return sum(r * r / s for r, s in zip(rank_sums, sizes))


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Tie-corrected k-sample rank test; returns (H, p).

    Combined samples of at most KW_EXACT_MAX_N observations get an exact
    permutation p-value; larger samples use the chi-square approximation
    with k-1 degrees of freedom. When every observation is identical there
    is no evidence of any difference: (0.0, 1.0).
    """
    if len(groups) < 2:
        raise ValueError("kruskal_wallis needs at least two groups")
    sizes = [len(g) for g in groups]
    if any(s < 1 for s in sizes):
        raise ValueError("kruskal_wallis needs non-empty groups")
    pooled: list[float] = [v for g in groups for v in g]
    n = len(pooled)
    correction = 1.0 - _tie_term(pooled) / (n**3 - n) if n > 1 else 0.0
    if correction <= 0.0:
        return 0.0, 1.0  # every observation tied with every other

    ranks = _midranks(pooled)
    bounds = []
    at = 0
    for s in sizes:
        bounds.append((at, at + s))
        at += s
    rank_sums = [sum(ranks[lo:hi]) for lo, hi in bounds]
    base = 12.0 / (n * (n + 1))
    h_obs = (base * _h_numerator(rank_sums, sizes) - 3.0 * (n + 1)) / correction

    if n <= KW_EXACT_MAX_N:
        # enumerate every split of the pooled positions into the group sizes;
        # H is increasing in sum(R_g^2/n_g), so compare that statistic
        t_obs = _h_numerator(rank_sums, sizes) - _EPS
        hits = 0
        total = 0
        positions = frozenset(range(n))

        def split(avail: frozenset[int], g: int, acc: float) -> None:
            nonlocal hits, total
            if g == len(sizes) - 1:
                last = sum(ranks[i] for i in avail)
                total += 1
                if acc + last * last / sizes[g] >= t_obs:
                    hits += 1
                return
            for combo in combinations(sorted(avail), sizes[g]):
                r = sum(ranks[i] for i in combo)
                split(avail.difference(combo), g + 1, acc + r * r / sizes[g])

        split(positions, 0, 0.0)
        return h_obs, hits / total

    return h_obs, _chi2_sf(h_obs, len(groups) - 1)


def bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> list[bool]:
    """Which hypotheses stay significant at family level ``alpha``."""
    if not p_values:
        return []
    cut = alpha / len(p_values)
    return [p < cut for p in p_values]


# ---------------------------------------------------------------------------
# descriptive helpers


def frequency(ensembles: Iterable, pool_size: int) -> list[int]:
    """How often each pool rule (by integer label) appears across ensembles."""
    if pool_size < 1:
        raise ValueError(f"pool_size must be >= 1, got {pool_size}")
    counts = [0] * pool_size
    for ens in ensembles:
        for rule in ens.rules:
            try:
                idx = int(rule.label)
            except (TypeError, ValueError):
                raise ValueError(
                    f"rule label {rule.label!r} is not a pool index"
                ) from None
            if not 0 <= idx < pool_size:
                raise ValueError(f"pool index {idx} outside pool of {pool_size}")
            counts[idx] += 1
    return counts


def timing(records: Iterable[RunRecord]) -> dict[str, float]:
    """Mean seconds per method, keyed and ordered by method name."""
    sums: dict[str, list[float]] = {}
    for rec in records:
        sums.setdefault(rec.method, []).append(rec.seconds)
    return {m: sum(v) / len(v) for m, v in sorted(sums.items())}


# ---------------------------------------------------------------------------
# results files


_HEADER = ["method", "rep", "score", "seconds"]


def write_results(path: str | Path, records: Sequence[RunRecord]) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_HEADER)
        for rec in records:
            writer.writerow([rec.method, rec.rep, repr(rec.score), repr(rec.seconds)])


def read_results(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"results file not found: {path}")
    records: list[RunRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                records.append(RunRecord(row[0], int(row[1]), float(row[2]), float(row[3])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records
