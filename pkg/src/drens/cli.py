"""Command line front end tying the pipeline together.

Typical flow::

    drens gen --out corpus ...
    drens evolve --corpus corpus/manifest.json --out pool.txt ...
    drens build-ensembles --pool pool.txt --corpus corpus/manifest.json --out ens/
    drens eval --corpus corpus/manifest.json --rules pool.txt --ensemble ens/*.ens --out results.csv
    drens compare --results results.csv --out report/
    drens freq --pool pool.txt --ensemble ens/*.ens --out freq.csv

Every artifact-producing command also writes a small JSON metadata file
(command, configuration, configuration hash, seeds, tool version — no
timestamps) so a rerun with the same inputs reproduces every byte. The only
deliberate exception is measured wall-clock time: ``eval --timing`` and
``bench-time`` record real durations, which are not reproducible.

Exit codes: 1 for invalid configuration or file contents, 2 for missing
input files and command-line usage errors.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from pathlib import Path

import click

from . import __version__
from .ensemble import Ensemble, Mode, load_ensemble, save_ensemble
from .expr import DispatchingRule, ParseError, parse, serialize
from .gp import GPConfig, evolve
from .instances import ValidationError, load_corpus, make_corpus
from .sec import SECConfig, construct, evaluate_ensemble
from .sim import run_sgs
from .stats import (
    RunRecord,
    aggregate,
    bonferroni,
    frequency,
    kruskal_wallis,
    mann_whitney,
    read_results,
    timing,
    write_results,
)

_EXISTING_FILE = click.Path(exists=True, dir_okay=False, path_type=Path)


class _ConfigError(click.ClickException):
    exit_code = 1


class _MissingInput(click.ClickException):
    exit_code = 2


def _write_metadata(target: Path, command: str, config: dict, seeds: list[int]) -> None:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    payload = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(canon.encode("utf-8")).hexdigest(),
        "seeds": seeds,
        "tool": {"name": "drens", "version": __version__},
    }
    target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _meta_path(out: Path) -> Path:
    return out / "metadata.json" if out.is_dir() else Path(str(out) + ".meta.json")


def _int_list(text: str, option: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise _ConfigError(f"{option} expects comma-separated integers, got {text!r}")
    if not values:
        raise _ConfigError(f"{option} must list at least one value")
    return values


def _mode_list(text: str) -> list[Mode]:
    modes = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            modes.append(Mode(part))
        except ValueError:
            raise _ConfigError(f"unknown mode {part!r}; use EDR_S or EDR_M") from None
    if not modes:
        raise _ConfigError("--modes must list at least one mode")
    return modes


def _load_corpus(manifest: Path) -> dict:
    try:
        return load_corpus(manifest)
    except FileNotFoundError as exc:
        raise _MissingInput(str(exc)) from None
    except (ValidationError, ValueError) as exc:
        raise _ConfigError(str(exc)) from None


def _load_pool(path: Path) -> list[DispatchingRule]:
    """One expression per line; blank lines and # comments are skipped.

    Rules are labelled with their position so ensemble membership can be
    traced back to the pool.
    """
    rules: list[DispatchingRule] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            parsed = parse(text)
        except ParseError as exc:
            raise _ConfigError(f"{path}:{lineno}: {exc}") from None
        rules.append(DispatchingRule(parsed.root, label=str(len(rules))))
    if not rules:
        raise _ConfigError(f"{path}: no rules found")
    return rules


@click.group()
@click.version_option(__version__, prog_name="drens")
def main() -> None:
    """Evolve, combine and evaluate dispatching rules for dynamic scheduling."""


# ---------------------------------------------------------------------------
# gen


@main.command()
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--train", default=60, show_default=True, help="Training instances.")
@click.option("--validation", default=60, show_default=True, help="Validation instances.")
@click.option("--test", default=60, show_default=True, help="Test instances.")
@click.option("--n-min", default=12, show_default=True, help="Fewest jobs per instance.")
@click.option("--n-max", default=100, show_default=True, help="Most jobs per instance.")
@click.option("--m-min", default=3, show_default=True, help="Fewest machines.")
@click.option("--m-max", default=10, show_default=True, help="Most machines.")
@click.option("--proc-lo", default=1, show_default=True)
@click.option("--proc-hi", default=100, show_default=True)
@click.option("--weight-hi", default=10, show_default=True)
@click.option("--congestion-lo", default=0.25, show_default=True)
@click.option("--congestion-hi", default=1.0, show_default=True)
@click.option("--tf-lo", default=0.0, show_default=True, help="Lowest tardiness factor.")
@click.option("--tf-hi", default=1.0, show_default=True)
@click.option("--rdd-lo", default=0.0, show_default=True, help="Lowest due-date spread.")
@click.option("--rdd-hi", default=1.0, show_default=True)
def gen(out, seed, train, validation, test, n_min, n_max, m_min, m_max, proc_lo, proc_hi,
        weight_hi, congestion_lo, congestion_hi, tf_lo, tf_hi, rdd_lo, rdd_hi):
    """Generate a train/validation/test instance corpus."""
    config = {
        "counts": [train, validation, test],
        "n_range": [n_min, n_max],
        "m_range": [m_min, m_max],
        "proc": [proc_lo, proc_hi],
        "weight_hi": weight_hi,
        "congestion": [congestion_lo, congestion_hi],
        "tf": [tf_lo, tf_hi],
        "rdd": [rdd_lo, rdd_hi],
    }
    try:
        written = make_corpus(
            out,
            counts=(train, validation, test),
            seed=seed,
            n_range=(n_min, n_max),
            m_range=(m_min, m_max),
            proc_lo=proc_lo,
            proc_hi=proc_hi,
            weight_hi=weight_hi,
            congestion_range=(congestion_lo, congestion_hi),
            tf_range=(tf_lo, tf_hi),
            rdd_range=(rdd_lo, rdd_hi),
        )
    except (ValidationError, ValueError) as exc:
        raise _ConfigError(str(exc)) from None
    _write_metadata(out / "metadata.json", "gen", config, [seed])
    total = sum(len(paths) for paths in written.values())
    click.echo(f"wrote {total} instances under {out} (manifest.json + metadata.json)")


# ---------------------------------------------------------------------------
# evolve


def _evolve_worker(args):
    config, train = args
    return evolve(config, train)


@main.command("evolve")
@click.option("--corpus", type=_EXISTING_FILE, required=True, help="Corpus manifest.json.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--runs", default=10, show_default=True, help="Independent GP runs.")
@click.option("--seed-base", default=0, show_default=True, help="Run i uses seed seed-base+i.")
@click.option("--seeds", default=None, help="Explicit comma-separated seeds (overrides --runs).")
@click.option("--pop", default=1000, show_default=True)
@click.option("--evals", default=80000, show_default=True)
@click.option("--max-depth", default=5, show_default=True)
@click.option("--mutation-prob", default=0.3, show_default=True)
@click.option("--jobs", default=1, show_default=True, help="Worker processes.")
@click.option("--log-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Also write per-run improvement logs here.")
def evolve_cmd(corpus, out, runs, seed_base, seeds, pop, evals, max_depth, mutation_prob,
               jobs, log_dir):
    """Evolve a pool of dispatching rules on the training set."""
    sets = _load_corpus(corpus)
    train = sets.get("train")
    if train is None or not len(train):
        raise _ConfigError(f"{corpus}: corpus has no training instances")
    if seeds is not None:
        seed_list = _int_list(seeds, "--seeds")
    else:
        if runs < 1:
            raise _ConfigError(f"--runs must be >= 1, got {runs}")
        seed_list = [seed_base + i for i in range(runs)]
    configs = []
    for s in seed_list:
        cfg = GPConfig(pop_size=pop, max_evals=evals, max_depth=max_depth,
                       mutation_prob=mutation_prob, seed=s)
        try:
            cfg.validate()
        except ValidationError as exc:
            raise _ConfigError(str(exc)) from None
        configs.append(cfg)

    if jobs > 1 and len(configs) > 1:
        import multiprocessing

        with multiprocessing.Pool(jobs) as pool_:
            results = pool_.map(_evolve_worker, [(cfg, train) for cfg in configs])
    else:
        results = [evolve(cfg, train) for cfg in configs]

    lines = ["# evolved dispatching-rule pool (one prefix expression per line)"]
    for cfg, res in zip(configs, results):
        lines.append(f"# seed={cfg.seed} fitness={res.best_fitness!r}")
        lines.append(serialize(res.best.root))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        for cfg, res in zip(configs, results):
            log_lines = ["evaluations,best_fitness"]
            log_lines.extend(f"{n},{f!r}" for n, f in res.log)
            (log_dir / f"gp_seed{cfg.seed}.csv").write_text(
                "\n".join(log_lines) + "\n", encoding="utf-8"
            )

    config = {"pop": pop, "evals": evals, "max_depth": max_depth,
              "mutation_prob": mutation_prob, "corpus": str(corpus)}
    _write_metadata(_meta_path(out), "evolve", config, seed_list)
    click.echo(f"wrote {len(results)} rules to {out}")


# ---------------------------------------------------------------------------
# build-ensembles


@main.command("build-ensembles")
@click.option("--pool", type=_EXISTING_FILE, required=True)
@click.option("--corpus", type=_EXISTING_FILE, required=True, help="Corpus manifest.json.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--candidates", default="100", show_default=True,
              help="Comma-separated candidate counts to try.")
@click.option("--sizes", default="3,5,7", show_default=True,
              help="Comma-separated ensemble sizes.")
@click.option("--modes", default="EDR_M", show_default=True,
              help="Comma-separated collaboration modes (EDR_S,EDR_M).")
@click.option("--reps", default=30, show_default=True, help="Repetitions per combination.")
@click.option("--seed", default=0, show_default=True)
@click.option("--with-replacement", is_flag=True, default=False,
              help="Allow a rule to appear twice inside one ensemble.")
@click.option("--jobs", default=1, show_default=True)
def build_ensembles(pool, corpus, out, candidates, sizes, modes, reps, seed,
                    with_replacement, jobs):
    """Construct ensembles from a rule pool by random sampling."""
    rules = _load_pool(pool)
    sets = _load_corpus(corpus)
    validation = sets.get("validation")
    if validation is None or not len(validation):
        raise _ConfigError(f"{corpus}: corpus has no validation instances")
    p_values = _int_list(candidates, "--candidates")
    e_values = _int_list(sizes, "--sizes")
    mode_values = _mode_list(modes)
    if reps < 1:
        raise _ConfigError(f"--reps must be >= 1, got {reps}")

    out.mkdir(parents=True, exist_ok=True)
    import random as _random

    master = _random.Random(seed)
    written = 0
    for p in p_values:
        for e in e_values:
            for mode in mode_values:
                for rep in range(reps):
                    combo_seed = master.getrandbits(63)
                    cfg = SECConfig(num_candidates=p, size=e, mode=mode, seed=combo_seed,
                                    without_replacement=not with_replacement)
                    try:
                        best, scored = construct(rules, cfg, validation, jobs=jobs)
                    except ValidationError as exc:
                        raise _ConfigError(str(exc)) from None
                    stem = f"sec_p{p}_e{e}_{mode.value}_rep{rep}"
                    save_ensemble(best, out / f"{stem}.ens")
                    rows = ["candidate_id,score,member_ids"]
                    for cid, (cand, score) in enumerate(scored):
                        ids = ";".join(r.label for r in cand.rules)
                        rows.append(f"{cid},{score!r},{ids}")
                    (out / f"{stem}_scores.csv").write_text(
                        "\n".join(rows) + "\n", encoding="utf-8"
                    )
                    written += 1

    config = {"pool": str(pool), "corpus": str(corpus), "candidates": p_values,
              "sizes": e_values, "modes": [m.value for m in mode_values],
              "reps": reps, "without_replacement": not with_replacement}
    _write_metadata(out / "metadata.json", "build-ensembles", config, [seed])
    click.echo(f"wrote {written} ensembles to {out}")


# ---------------------------------------------------------------------------
# eval


_REP_SUFFIX = re.compile(r"^(?P<method>.+)_rep(?P<rep>\d+)$")


@main.command("eval")
@click.option("--corpus", type=_EXISTING_FILE, required=True, help="Corpus manifest.json.")
@click.option("--role", default="test", show_default=True,
              type=click.Choice(["train", "validation", "test"]))
@click.option("--rules", type=_EXISTING_FILE, default=None, help="Rule pool to evaluate.")
@click.option("--ensemble", "ensembles", type=_EXISTING_FILE, multiple=True,
              help="Ensemble file(s) to evaluate (repeatable).")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--timing/--no-timing", default=False, show_default=True,
              help="Record real wall-clock seconds (not reproducible).")
def eval_cmd(corpus, role, rules, ensembles, out, timing):
    """Score rules and/or ensembles on one corpus role; write a results CSV."""
    if rules is None and not ensembles:
        raise _ConfigError("nothing to evaluate: pass --rules and/or --ensemble")
    sets = _load_corpus(corpus)
    subset = sets.get(role)
    if subset is None or not len(subset):
        raise _ConfigError(f"{corpus}: corpus has no {role} instances")

    records: list[RunRecord] = []
    if rules is not None:
        for idx, rule in enumerate(_load_pool(rules)):
            t0 = time.perf_counter()
            score = sum(run_sgs(inst, rule).twt for inst in subset) / len(subset)
            elapsed = time.perf_counter() - t0 if timing else 0.0
            records.append(RunRecord("DR", idx, score, elapsed))
    for path in ensembles:
        try:
            ens = load_ensemble(path)
        except (ValueError, ParseError) as exc:
            raise _ConfigError(str(exc)) from None
        match = _REP_SUFFIX.match(path.stem)
        method = match.group("method") if match else path.stem
        rep = int(match.group("rep")) if match else 0
        t0 = time.perf_counter()
        score = evaluate_ensemble(ens, subset)
        elapsed = time.perf_counter() - t0 if timing else 0.0
        records.append(RunRecord(method, rep, score, elapsed))

    out.parent.mkdir(parents=True, exist_ok=True)
    write_results(out, records)
    config = {"corpus": str(corpus), "role": role, "rules": str(rules) if rules else None,
              "ensembles": [str(p) for p in ensembles], "timing": timing}
    _write_metadata(_meta_path(out), "eval", config, [])
    click.echo(f"wrote {len(records)} rows to {out}")


# ---------------------------------------------------------------------------
# compare


@main.command()
@click.option("--results", "results_paths", type=_EXISTING_FILE, multiple=True, required=True,
              help="Results CSV file(s) from `drens eval` (repeatable).")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--alpha", default=0.05, show_default=True)
def compare(results_paths, out, alpha):
    """Aggregate results and test method differences for significance."""
    if not 0.0 < alpha < 1.0:
        raise _ConfigError(f"--alpha must be in (0, 1), got {alpha}")
    records = []
    for path in results_paths:
        try:
            records.extend(read_results(path))
        except ValueError as exc:
            raise _ConfigError(str(exc)) from None
    if not records:
        raise _ConfigError("results files contain no rows")

    by_method: dict[str, list[float]] = {}
    for rec in sorted(records, key=lambda r: (r.method, r.rep)):
        by_method.setdefault(rec.method, []).append(rec.score)
    methods = sorted(by_method)
    mean_secs = timing(records)

    out.mkdir(parents=True, exist_ok=True)
    agg_rows = ["method,count,min,median,max,mean_seconds"]
    for m in methods:
        lo, med, hi = aggregate(by_method[m])
        agg_rows.append(f"{m},{len(by_method[m])},{lo!r},{med!r},{hi!r},{mean_secs[m]!r}")
    (out / "aggregate.csv").write_text("\n".join(agg_rows) + "\n", encoding="utf-8")

    kw_line = "k,H,p,alpha,significant"
    if len(methods) >= 2:
        h_stat, kw_p = kruskal_wallis([by_method[m] for m in methods])
        kw_rows = [kw_line, f"{len(methods)},{h_stat!r},{kw_p!r},{alpha!r},{kw_p < alpha}"]
    else:
        kw_rows = [kw_line]
    (out / "kruskal.csv").write_text("\n".join(kw_rows) + "\n", encoding="utf-8")

    pairs = [(a, b) for i, a in enumerate(methods) for b in methods[i + 1:]]
    pair_stats = [mann_whitney(by_method[a], by_method[b]) for a, b in pairs]
    flags = bonferroni([p for _, p in pair_stats], alpha)
    pw_rows = ["method_a,method_b,u,p,significant"]
    for (a, b), (u_stat, p_val), sig in zip(pairs, pair_stats, flags):
        pw_rows.append(f"{a},{b},{u_stat!r},{p_val!r},{sig}")
    (out / "pairwise.csv").write_text("\n".join(pw_rows) + "\n", encoding="utf-8")

    md = ["# Method comparison", "", "| method | runs | min | median | max |",
          "|---|---|---|---|---|"]
    for m in methods:
        lo, med, hi = aggregate(by_method[m])
        md.append(f"| {m} | {len(by_method[m])} | {lo:g} | {med:g} | {hi:g} |")
    md.append("")
    if len(methods) >= 2:
        md.append(f"Kruskal-Wallis across {len(methods)} methods: H = {h_stat:.4f}, "
                  f"p = {kw_p:.4g} ({'significant' if kw_p < alpha else 'not significant'} "
                  f"at alpha = {alpha:g}).")
        md.append("")
        md.append(f"Pairwise Mann-Whitney, Bonferroni-corrected over {len(pairs)} pairs:")
        md.append("")
        md.append("| pair | U | p | significant |")
        md.append("|---|---|---|---|")
        for (a, b), (u_stat, p_val), sig in zip(pairs, pair_stats, flags):
            md.append(f"| {a} vs {b} | {u_stat:g} | {p_val:.4g} | {'yes' if sig else 'no'} |")
    else:
        md.append("Only one method present; no tests were run.")
    (out / "summary.md").write_text("\n".join(md) + "\n", encoding="utf-8")

    config = {"results": [str(p) for p in results_paths], "alpha": alpha}
    _write_metadata(out / "metadata.json", "compare", config, [])
    click.echo(f"wrote aggregate.csv, kruskal.csv, pairwise.csv, summary.md to {out}")


# ---------------------------------------------------------------------------
# freq


@main.command()
@click.option("--pool", type=_EXISTING_FILE, required=True)
@click.option("--ensemble", "ensembles", type=_EXISTING_FILE, multiple=True, required=True,
              help="Ensemble file(s) to count members of (repeatable).")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def freq(pool, ensembles, out):
    """Count how often each pool rule appears across ensembles."""
    rules = _load_pool(pool)
    # members are matched back to the pool by canonical expression text;
    # duplicates in the pool credit the first occurrence
    by_text: dict[str, str] = {}
    for rule in rules:
        by_text.setdefault(serialize(rule.root), rule.label)
    loaded = []
    for path in ensembles:
        try:
            ens = load_ensemble(path)
        except (ValueError, ParseError) as exc:
            raise _ConfigError(str(exc)) from None
        relabelled = []
        for member in ens.rules:
            text = serialize(member.root)
            label = by_text.get(text)
            if label is None:
                raise _ConfigError(f"{path}: ensemble rule {text!r} is not in the pool")
            relabelled.append(DispatchingRule(member.root, label=label))
        loaded.append(Ensemble(relabelled, ens.mode))
    counts = frequency(loaded, len(rules))

    out.parent.mkdir(parents=True, exist_ok=True)
    rows = ["rule_id,count,rule"]
    for idx, rule in enumerate(rules):
        rows.append(f"{idx},{counts[idx]},{serialize(rule.root)}")
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    config = {"pool": str(pool), "ensembles": [str(p) for p in ensembles]}
    _write_metadata(_meta_path(out), "freq", config, [])
    click.echo(f"wrote per-rule counts to {out}")


# ---------------------------------------------------------------------------
# bench-time


@main.command("bench-time")
@click.option("--pool", type=_EXISTING_FILE, required=True)
@click.option("--corpus", type=_EXISTING_FILE, required=True, help="Corpus manifest.json.")
@click.option("--role", default="test", show_default=True,
              type=click.Choice(["train", "validation", "test"]))
@click.option("--sizes", default="3,5,7", show_default=True)
@click.option("--modes", default="EDR_S,EDR_M", show_default=True)
@click.option("--seed", default=0, show_default=True, help="Seed for sampling ensembles.")
@click.option("--repeats", default=3, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def bench_time(pool, corpus, role, sizes, modes, seed, repeats, out):
    """Measure schedule-construction time per method (wall clock, not reproducible)."""
    rules = _load_pool(pool)
    sets = _load_corpus(corpus)
    subset = sets.get(role)
    if subset is None or not len(subset):
        raise _ConfigError(f"{corpus}: corpus has no {role} instances")
    e_values = _int_list(sizes, "--sizes")
    mode_values = _mode_list(modes)
    if repeats < 1:
        raise _ConfigError(f"--repeats must be >= 1, got {repeats}")
    if max(e_values) > len(rules):
        raise _ConfigError(
            f"largest ensemble size {max(e_values)} exceeds pool of {len(rules)} rules"
        )

    import random as _random

    rng = _random.Random(seed)
    rows = ["method,ensemble_size,seconds_per_schedule"]

    t0 = time.perf_counter()
    for _ in range(repeats):
        for rule in rules:
            for inst in subset:
                run_sgs(inst, rule)
    per = (time.perf_counter() - t0) / (repeats * len(rules) * len(subset))
    rows.append(f"DR,1,{per!r}")

    from .ensemble import run_ensemble

    for mode in mode_values:
        for e in e_values:
            members = [rules[i] for i in rng.sample(range(len(rules)), e)]
            ens = Ensemble(members, mode)
            t0 = time.perf_counter()
            for _ in range(repeats):
                for inst in subset:
                    run_ensemble(inst, ens)
            per = (time.perf_counter() - t0) / (repeats * len(subset))
            rows.append(f"{mode.value},{e},{per!r}")

    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    config = {"pool": str(pool), "corpus": str(corpus), "role": role,
              "sizes": e_values, "modes": [m.value for m in mode_values],
              "repeats": repeats}
    _write_metadata(_meta_path(out), "bench-time", config, [seed])
    click.echo(f"wrote timing table to {out}")


if __name__ == "__main__":
    main()
