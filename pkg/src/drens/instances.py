"""Problem instances for dynamic scheduling on unrelated parallel machines.

Each job has a release time, an absolute due date, a tardiness weight and a
per-machine processing time. Instances live in plain text files; corpora are
train/validation/test directories tied together by a JSON manifest.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "JobSpec",
    "Instance",
    "InstanceSet",
    "GenParams",
    "ValidationError",
    "InstanceFormatError",
    "generate",
    "save",
    "load",
    "make_corpus",
    "load_corpus",
    "ROLES",
]

ROLES = ("train", "validation", "test")


class ValidationError(ValueError):
    """An instance or parameter set violates a structural constraint."""


class InstanceFormatError(ValueError):
    """An instance file could not be parsed; message names file and line."""


@dataclass(frozen=True, slots=True)
class JobSpec:
    release: int
    due: int
    weight: int
    proc_times: tuple[int, ...]


@dataclass
class Instance:
    # no __slots__: the simulator stashes derived arrays on the instance dict
    name: str
    machines: int
    jobs: list[JobSpec]

    @property
    def n_jobs(self) -> int:
        return len(self.jobs)

    def validate(self) -> None:
        if self.machines < 1:
            raise ValidationError(f"{self.name}: machines must be >= 1, got {self.machines}")
        if not self.jobs:
            raise ValidationError(f"{self.name}: instance has no jobs")
        for idx, job in enumerate(self.jobs):
            if len(job.proc_times) != self.machines:
                raise ValidationError(
                    f"{self.name}: job {idx} has {len(job.proc_times)} processing "
                    f"times, expected {self.machines}"
                )
            if any(p < 1 for p in job.proc_times):
                raise ValidationError(f"{self.name}: job {idx} processing times must be >= 1")
            if job.release < 0:
                raise ValidationError(f"{self.name}: job {idx} release must be >= 0")
            if job.due < job.release:
                raise ValidationError(
                    f"{self.name}: job {idx} due {job.due} earlier than release {job.release}"
                )
            if job.weight < 1:
                raise ValidationError(f"{self.name}: job {idx} weight must be >= 1")


@dataclass(slots=True)
class InstanceSet:
    role: str
    instances: list[Instance] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValidationError(f"unknown instance-set role {self.role!r}")

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


@dataclass(frozen=True, slots=True)
class GenParams:
    """Knobs for random instance generation.

    ``congestion`` spreads releases over ``congestion * total_mean_work / m``;
    smaller values pile jobs up early. ``tf`` (tardiness factor) tightens due
    dates as it grows, ``rdd`` widens the due-date window. Both in [0, 1].
    """

    n_jobs: int
    machines: int
    proc_lo: int = 1
    proc_hi: int = 100
    weight_hi: int = 10
    congestion: float = 0.5
    tf: float = 0.4
    rdd: float = 0.6
    seed: int = 0

    def validate(self) -> None:
        if self.n_jobs < 1:
            raise ValidationError(f"n_jobs must be >= 1, got {self.n_jobs}")
        if self.machines < 1:
            raise ValidationError(f"machines must be >= 1, got {self.machines}")
        if not (1 <= self.proc_lo <= self.proc_hi):
            raise ValidationError(
                f"processing-time bounds must satisfy 1 <= lo <= hi, got "
                f"[{self.proc_lo}, {self.proc_hi}]"
            )
        if self.weight_hi < 1:
            raise ValidationError(f"weight_hi must be >= 1, got {self.weight_hi}")
        if self.congestion <= 0:
            raise ValidationError(f"congestion must be > 0, got {self.congestion}")
        if not 0.0 <= self.tf <= 1.0:
            raise ValidationError(f"tf must be within [0, 1], got {self.tf}")
        if not 0.0 <= self.rdd <= 1.0:
            raise ValidationError(f"rdd must be within [0, 1], got {self.rdd}")


def generate(params: GenParams, name: str = "") -> Instance:
    """Draw a random instance; identical params (incl. seed) give identical output.

    Processing times are uniform integers in [proc_lo, proc_hi] per
    (job, machine); weights uniform in [1, weight_hi]. Releases are uniform
    integers in [0, congestion * sum_j mean_proc_j / machines]. Due dates are
    release + round(k_j * mean_proc_j) with k_j uniform in a window scaled by
    K = machines: [max(1, ((1-tf) - rdd/2) * K), ((1-tf) + rdd/2) * K]
    (window collapsed upward when tf is extreme enough to invert it), so due
    dates never precede releases.
    """
    params.validate()
    rng = random.Random(params.seed)
    m = params.machines
    proc_rows: list[tuple[int, ...]] = []
    weights: list[int] = []
    for _ in range(params.n_jobs):
        proc_rows.append(tuple(rng.randint(params.proc_lo, params.proc_hi) for _ in range(m)))
        weights.append(rng.randint(1, params.weight_hi))
    mean_proc = [sum(row) / m for row in proc_rows]
    release_hi = int(params.congestion * sum(mean_proc) / m)
    releases = [rng.randint(0, release_hi) for _ in range(params.n_jobs)]
    k_lo = max(1.0, ((1.0 - params.tf) - params.rdd / 2.0) * m)
    k_hi = max(k_lo, ((1.0 - params.tf) + params.rdd / 2.0) * m)
    jobs: list[JobSpec] = []
    for j in range(params.n_jobs):
        k = rng.uniform(k_lo, k_hi)
        due = releases[j] + round(k * mean_proc[j])
        if due < releases[j]:
            due = releases[j]
        jobs.append(JobSpec(releases[j], due, weights[j], proc_rows[j]))
    inst = Instance(name=name or f"inst_{params.seed}", machines=m, jobs=jobs)
    inst.validate()
    return inst


# ---------------------------------------------------------------------------
# file I/O
#
# Line 1: "<n_jobs> <machines>"
# Then one line per job: "<release> <due> <weight> <p_1> ... <p_m>"


def save(instance: Instance, path: str | Path) -> Path:
    instance.validate()
    path = Path(path)
    lines = [f"{instance.n_jobs} {instance.machines}"]
    for job in instance.jobs:
        lines.append(
            f"{job.release} {job.due} {job.weight} " + " ".join(str(p) for p in job.proc_times)
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def _parse_ints(raw: str, path: Path, lineno: int, expected: int) -> list[int]:
    parts = raw.split()
    if len(parts) != expected:
        raise InstanceFormatError(
            f"{path}:{lineno}: expected {expected} fields, got {len(parts)}"
        )
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise InstanceFormatError(f"{path}:{lineno}: non-integer field in {raw!r}") from None


def load(path: str | Path) -> Instance:
    """Read an instance file; the instance name is the file stem."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"instance file not found: {path}")
    raw_lines = path.read_text().splitlines()
    if not raw_lines:
        raise InstanceFormatError(f"{path}:1: empty instance file")
    n, m = _parse_ints(raw_lines[0], path, 1, 2)
    if len(raw_lines) < n + 1:
        raise InstanceFormatError(
            f"{path}:{len(raw_lines)}: expected {n} job lines, found {len(raw_lines) - 1}"
        )
    jobs: list[JobSpec] = []
    for j in range(n):
        vals = _parse_ints(raw_lines[1 + j], path, 2 + j, 3 + m)
        jobs.append(JobSpec(vals[0], vals[1], vals[2], tuple(vals[3:])))
    inst = Instance(name=path.stem, machines=m, jobs=jobs)
    try:
        inst.validate()
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return inst


# ---------------------------------------------------------------------------
# corpora


def make_corpus(
    out_dir: str | Path,
    counts: tuple[int, int, int] = (60, 60, 60),
    seed: int = 0,
    *,
    n_range: tuple[int, int] = (12, 100),
    m_range: tuple[int, int] = (3, 10),
    proc_lo: int = 1,
    proc_hi: int = 100,
    weight_hi: int = 10,
    congestion_range: tuple[float, float] = (0.25, 1.0),
    tf_range: tuple[float, float] = (0.0, 1.0),
    rdd_range: tuple[float, float] = (0.0, 1.0),
) -> dict[str, list[Path]]:
    """Generate a train/validation/test corpus plus a JSON manifest.

    Per-instance shape (n, m) and difficulty (tf, rdd, congestion) are drawn
    from the given ranges; every instance gets its own seed derived from the
    master seed, so corpora are fully reproducible and roles are disjoint.
    Returns {role: [instance paths]} with paths relative to ``out_dir``.
    """
    if len(counts) != 3 or any(c < 0 for c in counts):
        raise ValidationError(f"counts must be three non-negative integers, got {counts}")
    if not (1 <= n_range[0] <= n_range[1]):
        raise ValidationError(f"bad n_range {n_range}")
    if not (1 <= m_range[0] <= m_range[1]):
        raise ValidationError(f"bad m_range {m_range}")
    out_dir = Path(out_dir)
    rng = random.Random(seed)
    manifest: dict[str, list[str]] = {}
    result: dict[str, list[Path]] = {}
    for role, count in zip(ROLES, counts):
        role_dir = out_dir / role
        role_dir.mkdir(parents=True, exist_ok=True)
        rel_paths: list[str] = []
        paths: list[Path] = []
        for i in range(count):
            params = GenParams(
                n_jobs=rng.randint(*n_range),
                machines=rng.randint(*m_range),
                proc_lo=proc_lo,
                proc_hi=proc_hi,
                weight_hi=weight_hi,
                congestion=rng.uniform(*congestion_range),
                tf=rng.uniform(*tf_range),
                rdd=rng.uniform(*rdd_range),
                seed=rng.getrandbits(63),
            )
            name = f"{role}_{i:03d}"
            inst = generate(params, name=name)
            p = save(inst, role_dir / f"{name}.txt")
            rel_paths.append(str(p.relative_to(out_dir)))
            paths.append(p)
        manifest[role] = rel_paths
        result[role] = paths
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return result


def load_corpus(manifest_path: str | Path) -> dict[str, InstanceSet]:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"corpus manifest not found: {manifest_path}")
    try:
        mapping = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{manifest_path}: invalid JSON manifest: {exc}") from None
    base = manifest_path.parent
    corpus: dict[str, InstanceSet] = {}
    for role, rel_paths in sorted(mapping.items()):
        if role not in ROLES:
            raise ValidationError(f"{manifest_path}: unknown role {role!r}")
        corpus[role] = InstanceSet(role, [load(base / rp) for rp in rel_paths])
    return corpus
