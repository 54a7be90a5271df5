"""Sweep orchestration: expand a config into cells, run them, write tidy outputs.

A cell is one (algorithm, K, environment, seed) combination, or one named
check. Cells run in separate processes and write only their own per-run file;
the summary, aggregate and manifest are written afterwards by the parent.
"""
from __future__ import annotations

import csv
import logging
import os
import shutil
import time
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
import yaml

from . import analysis
from .config import CONTROL_STATISTICS, REWARD_PRESETS, ExperimentConfig
from .distributions import inverse_cdf, wasserstein1
from .engine import StatTable, UnsupportedControlError, dp_fixed_point, make_statistics, train
from .mdp import (
    DistTable,
    Policy,
    build_absorbing_chain,
    build_control_mdp,
    build_nchain,
    exact_return_dist,
    monte_carlo_return_dist,
    optimal_nchain_policy,
    policy_evaluation,
    random_mdp,
    random_policy,
)
from .statistics import StatisticSet, evaluate_set

logger = logging.getLogger(__name__)

RUN_COLUMNS = ["step", "state", "action", "stat_index", "tau_or_param", "learned_value", "true_value"]
SUMMARY_COLUMNS = ["run_id", "algorithm", "K", "env", "seed", "avg_stat_error", "sup_stat_error", "w1_error"]
AGGREGATE_COLUMNS = ["algorithm", "K", "env", "chain_len", "reward", "state", "metric", "stat_index",
                     "tau_or_param", "mean", "stderr", "n_seeds", "true_value"]
CHECK_COLUMNS = ["check", "case", "quantity", "value", "expected", "tolerance", "passed"]

CLOSEDNESS_CHECKS = ("quantile_nonclosedness", "nonuniform_c1", "nonuniform_c2", "mean_consistency",
                     "control", "moment_closure", "cdrl_equivalence", "projection_bounds")


def package_version() -> str:
    try:
        return version("statdrl")
    except PackageNotFoundError:
        return "unknown"


class RunDirectoryError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EnvSpec:
    name: str
    length: int
    reward_label: str
    reward: object
    label: str


@dataclass(frozen=True, eq=False)
class Cell:
    run_id: str
    algorithm: str
    k: int | None
    env: EnvSpec | None
    seed: int | None
    check: str | None = None


# environments ----------------------------------------------------------------------------------------------------


def _reward_spec(reward, n_atoms):
    spec = REWARD_PRESETS.get(reward, reward) if isinstance(reward, str) else reward
    if isinstance(spec, dict):
        spec = {"n_atoms": n_atoms, **spec}
    return spec


def env_specs(cfg: ExperimentConfig) -> list[EnvSpec]:
    env = cfg.env
    rewards = env["rewards"]
    out = []
    for length in env["lengths"] if env["name"] != "control" else [5]:
        for i, reward in enumerate(rewards):
            if isinstance(reward, str):
                tag = reward
            elif isinstance(reward, dict):
                tag = f"{reward['kind']}{i}"
            else:
                tag = f"r{reward:g}"
            base = {"nchain": f"nchain{length}", "absorbing_chain": f"absorbing{length}", "control": "control"}
            label = base[env["name"]] + (f"-{tag}" if len(rewards) > 1 else "")
            out.append(EnvSpec(env["name"], length, tag, _reward_spec(reward, env["n_atoms"]), label))
    return out


def build_env(cfg: ExperimentConfig, spec: EnvSpec):
    env = cfg.env
    if spec.name == "nchain":
        mdp = build_nchain(spec.length, env["p_forward"], env["gamma"], goal_reward=spec.reward)
        return mdp, optimal_nchain_policy(mdp)
    if spec.name == "absorbing_chain":
        mdp = build_absorbing_chain(spec.length, env["gamma"], terminal_reward=spec.reward)
        return mdp, Policy.uniform(mdp.num_states, 1)
    mdp = build_control_mdp(env["n_atoms"])
    return mdp, Policy.uniform(mdp.num_states, mdp.num_actions)


def followed_pairs(mdp, pi) -> list[tuple[int, int]]:
    """Pairs the evaluated policy takes; errors are reported on these only."""
    return [(x, a) for x in range(mdp.num_states) for a in range(mdp.num_actions) if pi.probs[x, a] > 0]


def start_action(pi, x: int) -> int:
    return int(np.argmax(pi.probs[x]))


def truth_for(cfg: ExperimentConfig, spec: EnvSpec) -> DistTable:
    """Ground truth on the followed pairs: Monte-Carlo returns when training, exact returns for DP runs.

    The Monte-Carlo generator is seeded from ``truth_seed`` and the
    environment label only, so truths do not depend on the rest of the sweep.
    """
    mdp, pi = build_env(cfg, spec)
    if cfg.mode == "dp":
        return exact_return_dist(mdp, pi)
    rng = np.random.default_rng([cfg.truth_seed, zlib.crc32(spec.label.encode())])
    rows = []
    for x in range(mdp.num_states):
        row = []
        for a in range(mdp.num_actions):
            if mdp.terminal[x]:
                row.append(mdp.rewards[x][a][x])
            elif pi.probs[x, a] > 0:
                row.append(monte_carlo_return_dist(mdp, pi, x, cfg.mc_rollouts, rng, first_action=a))
            else:
                row.append(None)
        rows.append(row)
    return DistTable(rows)


# cells -----------------------------------------------------------------------------------------------------------


def statistics_for(cfg: ExperimentConfig, algorithm: str, k: int | None) -> StatisticSet:
    stats = dict(cfg.statistics)
    if k is None and cfg.env["name"] == "control":
        stats.update(CONTROL_STATISTICS.get(algorithm.removeprefix("naive-"), {}))
        k = stats.get("K", k)
    supports = stats["supports"]
    if isinstance(supports, dict):
        supports = np.linspace(supports["low"], supports["high"], k)
    if algorithm == "cdrl":
        return StatisticSet.categorical(supports)
    taus = stats["taus"]
    return make_statistics(algorithm, len(taus) if taus is not None else k, stats["kappa"], taus=taus)


def expand_cells(cfg: ExperimentConfig) -> list[Cell]:
    """Every cell of the sweep in a fixed order."""
    if cfg.kind == "bounds":
        return [Cell(f"{name}_s{seed}", name, None, None, seed, check="bounds")
                for name in cfg.checks["names"] for seed in cfg.seeds]
    if cfg.kind == "closedness":
        return [Cell(name, name, None, None, None, check="closedness") for name in CLOSEDNESS_CHECKS]
    cells = []
    seeds = cfg.seeds[:1] if cfg.mode == "dp" else cfg.seeds
    for spec in env_specs(cfg):
        for algorithm in cfg.algorithms:
            for k in cfg.statistics["K"]:
                for seed in seeds:
                    ktag = "" if k is None else f"_K{k}"
                    cells.append(Cell(f"{algorithm}{ktag}_{spec.label}_s{seed}", algorithm, k, spec, seed))
    return cells


def _stat_rows(step, values, truth_stats, pairs, params):
    for x, a in pairs:
        for i, p in enumerate(params):
            yield [step, x, a, i, p, float(values[x, a, i]), float(truth_stats[(x, a)][i])]


def _param_labels(families: StatisticSet) -> list[float]:
    if families.kind == "categorical":
        return [float(z) for z in families.supports[:-1]]
    return [float(t) for t in families.taus]


def _run_learning_cell(cfg: ExperimentConfig, cell: Cell, truth: DistTable, run_path: Path) -> dict:
    mdp, pi = build_env(cfg, cell.env)
    families = statistics_for(cfg, cell.algorithm, cell.k)
    solver = cfg.solver
    if cfg.mode == "train":
        result = train(mdp, pi, families, cell.algorithm, alpha=cfg.alpha, n_steps=cfg.steps, rng=cell.seed,
                       control=cfg.control, epsilon=cfg.epsilon, record_every=cfg.record_every,
                       n_atoms=solver["n_atoms"], tol=solver["tol"], max_iters=solver["max_iters"])
        table, snapshots = result.table, result.snapshots or [(cfg.steps, result.table.values.copy())]
    else:
        init = StatTable.initial(mdp.num_states, mdp.num_actions, families, cell.algorithm,
                                 n_atoms=solver["n_atoms"], tol=solver["tol"])
        fit = dp_fixed_point(init, mdp, pi, tol=solver["dp_tol"], max_sweeps=solver["max_sweeps"])
        table, snapshots = fit.table, [(0, init.values.copy()), (fit.sweeps, fit.table.values.copy())]

    pairs = followed_pairs(mdp, pi)
    truth_stats = {(x, a): evaluate_set(families, truth[x, a]) for x, a in pairs}
    params = _param_labels(families)
    with open(run_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUN_COLUMNS)
        for step, values in snapshots:
            writer.writerows(_stat_rows(step, values, truth_stats, pairs, params))

    err = {(x, a): float(np.mean(np.abs(table.values[x, a] - truth_stats[(x, a)]))) for x, a in pairs}
    x0 = mdp.start_state
    a0 = start_action(pi, x0)
    w1 = float(wasserstein1(table.impute(x0, a0), truth[x0, a0]))
    state_errors = {x: err[(x, start_action(pi, x))] for x in range(mdp.num_states)
                    if (x, start_action(pi, x)) in err}
    extras = {
        "state_errors": state_errors,
        "start_values": [(i, params[i], float(table.values[x0, a0, i]), float(truth_stats[(x0, a0)][i]))
                         for i in range(len(params))],
    }
    if cfg.mode == "dp":
        extras["means"] = _start_means(table, mdp, pi, x0)
        extras["imputed"] = _imputed_summary(table, truth, pairs)
    summary = {
        "run_id": cell.run_id,
        "algorithm": cell.algorithm,
        "K": len(families),
        "env": cell.env.label,
        "seed": cell.seed,
        "avg_stat_error": err[(x0, a0)],
        "sup_stat_error": max(err.values()),
        "w1_error": w1,
    }
    return {"summary": summary, "extras": extras}


def _start_means(table, mdp, pi, x0):
    q = policy_evaluation(mdp, pi)[x0]
    try:
        est = table.mean_estimates(x0)
        greedy = int(np.argmax(est))
    except UnsupportedControlError:
        est, greedy = np.full(mdp.num_actions, np.nan), None
    return [(a, float(est[a]), float(q[a]), greedy) for a in range(mdp.num_actions)]


def _iqr(d):
    return inverse_cdf(d, 0.75) - inverse_cdf(d, 0.25)


def _imputed_summary(table, truth, pairs):
    rows = []
    for x, a in pairs:
        imp, tru = table.impute(x, a), truth[x, a]
        rows.append((x, a, float(imp.variance), float(tru.variance), float(wasserstein1(imp, tru)), float(_iqr(tru)),
                     imp.atoms.tolist(), imp.weights.tolist()))
    return rows


# checks ----------------------------------------------------------------------------------------------------------


def _row(check, case, quantity, value, expected, tolerance, passed=None):
    if passed is None:
        passed = abs(value - expected) <= tolerance
    return [check, case, quantity, float(value), float(expected), float(tolerance), bool(passed)]


def _bound_rows(cfg, cell):
    checks = cfg.checks
    family = analysis.seeded_family([cell.seed], checks["gamma"], checks["r_max"], checks["max_states"])
    if cell.algorithm == "cdrl_bound":
        report = analysis.check_theorem2_bound(family, checks["cdrl_k"], checks["r_max"])
    else:
        report = analysis.check_theorem3_bound(family, checks["qdrl_k"], checks["r_max"])
    rows = [_row(r["check"], f"seed{r['seed']}", "sup_stat_error", r["error"], r["bound"], 0.0, r["passed"])
            for r in report.rows()]
    return rows, report.offending


def _closedness_rows(cfg, name):
    seeds = cfg.seeds
    rows = []
    if name == "quantile_nonclosedness":
        rep = analysis.demo_quantile_nonclosedness(2, 0.9)
        rows.append(_row(name, "K2", "next_state_quantile_gap", rep.next_gap, 0.0, 1e-3))
        rows.append(_row(name, "K2", "start_quantile_A", rep.start_quantile["A"][0], rep.expected["A"], 1e-3))
        rows.append(_row(name, "K2", "start_quantile_B", rep.start_quantile["B"][1], rep.expected["B"], 1e-9))
    elif name == "nonuniform_c1":
        for L in (4, 6):
            rep = analysis.demo_nonuniform_error("C1", m=1, L=L)
            rows.append(_row(name, f"m1_L{L}", "statistic_gap", rep.gap, rep.expected_gap, 1e-9))
    elif name == "nonuniform_c2":
        rep = analysis.demo_nonuniform_error("C2", k=3, eps=0.01, gamma=0.9)
        rows.append(_row(name, "K3", "learned_middle_quantile", rep.learned["x0"], -0.9, 1e-9))
        rows.append(_row(name, "K3", "true_middle_quantile", rep.true["x0"], 0.0, 1e-9))
    elif name == "mean_consistency":
        rep = analysis.qdrl_mean_counterexample(5)
        rows.append(_row(name, "qdrl_K5", "implied_mean_a1", rep.implied[0, 0], 0.0, 1e-12))
        rows.append(_row(name, "qdrl_K5", "implied_mean_a2", rep.implied[0, 1], 0.025, 1e-12))
        rows.append(_row(name, "qdrl_K5", "greedy_action", rep.greedy[0], 1, 0.0))
        for seed in seeds:
            mdp, pi = _random_instance(seed)
            edge = 1.0 / (1 - mdp.gamma)
            cdrl = analysis.check_mean_consistency("cdrl", mdp, pi, StatisticSet.categorical(np.linspace(-edge, edge, 11)))
            rows.append(_row(name, f"cdrl_seed{seed}", "mean_gap", cdrl.gap, 0.0, 1e-8))
            edrl = analysis.check_mean_consistency("expectile", mdp, pi, StatisticSet.expectiles(taus=[0.1, 0.5, 0.9]))
            rows.append(_row(name, f"edrl_seed{seed}", "mean_gap", edrl.gap, 0.0, 1e-7))
    elif name == "control":
        expected = {"edrl": 0, "cdrl": 1, "qdrl": 1}
        for rep in analysis.control_comparison():
            rows.append(_row(name, rep.algorithm, "greedy_action", rep.greedy, expected[rep.algorithm], 0.0))
    elif name == "moment_closure":
        for seed in seeds:
            mdp, pi = _random_instance(seed)
            fitted = analysis.moment_fixed_point(mdp, pi, 4)
            truth = exact_return_dist(mdp, pi, tol=1e-14, max_atoms=30)
            gap = max(float(np.max(np.abs(fitted[x, a] - analysis._raw_moments(truth[x, a], 4)[1:])))
                      for x in range(mdp.num_states) for a in range(mdp.num_actions))
            rows.append(_row(name, f"seed{seed}", "moment_gap", gap, 0.0, 1e-8))
    elif name == "cdrl_equivalence":
        for seed in seeds:
            mdp, pi = _random_instance(seed, max_states=3)
            edge = 1.0 / (1 - mdp.gamma)
            gap = analysis.cdrl_equivalence_gap(mdp, pi, np.linspace(-edge, edge, 11))
            rows.append(_row(name, f"seed{seed}", "table_gap", gap, 0.0, 1e-12))
    elif name == "projection_bounds":
        rep = analysis.check_projection_bounds(1000, seeds[0])
        for q in ("cramer_nonexpansion", "cramer_error", "w1_error"):
            value = getattr(rep, q)
            rows.append(_row(name, "1000_pairs", q + "_excess", value, 0.0, 1e-9, value <= 1e-9))
    else:
        raise ValueError(f"unknown check {name!r}")
    return rows


def _random_instance(seed, max_states=5):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, max_states, 2, 0.9, 1.0)
    return mdp, random_policy(rng, mdp.num_states, mdp.num_actions)


# execution -------------------------------------------------------------------------------------------------------


def run_cell(cfg: ExperimentConfig, cell: Cell, truth, out_dir: str) -> dict:
    """Run one cell, catching failures so the sweep can continue."""
    start = time.perf_counter()
    out = Path(out_dir)
    record = {"run_id": cell.run_id, "status": "ok"}
    try:
        if cell.check == "bounds":
            rows, offending = _bound_rows(cfg, cell)
            record.update(rows=rows, offending=offending)
            if offending:
                record["status"] = "violated"
        elif cell.check == "closedness":
            rows = _closedness_rows(cfg, cell.algorithm)
            record["rows"] = rows
            if not all(r[-1] for r in rows):
                record["status"] = "violated"
        else:
            path = out / "runs" / f"{cell.run_id}.csv"
            record.update(_run_learning_cell(cfg, cell, truth, path))
            record["artifact"] = f"runs/{cell.run_id}.csv"
    except Exception as exc:  # noqa: BLE001 - any cell failure is recorded, not raised
        record["status"] = "failed"
        record["error"] = f"{type(exc).__name__}: {exc}"
        logger.error("cell %s failed:\n%s", cell.run_id, traceback.format_exc())
    record["wall_time_s"] = round(time.perf_counter() - start, 3)
    return record


def prepare_out_dir(out: Path, overwrite: bool) -> None:
    if out.exists() and any(out.iterdir()):
        if not (out / "manifest.yaml").exists():
            raise RunDirectoryError(f"{out} is not empty and holds no manifest.yaml; refusing to write there")
        if not overwrite:
            raise RunDirectoryError(f"{out} already holds a run; pass --overwrite to replace it")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_experiment(cfg: ExperimentConfig, out: str | Path, workers: int | None = None,
                   overwrite: bool = False) -> dict:
    """Run every cell of ``cfg`` and write outputs under ``out``; returns the manifest."""
    out = Path(out)
    prepare_out_dir(out, overwrite)
    cells = expand_cells(cfg)
    if any(c.env is not None for c in cells):
        (out / "runs").mkdir()
    truths = {}
    for spec in env_specs(cfg) if any(c.env is not None for c in cells) else []:
        logger.info("ground truth for %s", spec.label)
        truths[spec.label] = truth_for(cfg, spec)
    workers = workers or default_workers()
    logger.info("%d cells on %d worker(s)", len(cells), workers)
    if workers <= 1:
        records = [run_cell(cfg, c, truths.get(c.env and c.env.label), str(out)) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, cfg, c, truths.get(c.env and c.env.label), str(out)) for c in cells]
            records = [f.result() for f in futures]
    for rec in records:
        logger.info("%-40s %s %.1fs", rec["run_id"], rec["status"], rec["wall_time_s"])
    artifacts = [rec["artifact"] for rec in records if "artifact" in rec and rec["status"] == "ok"]
    artifacts += _write_reduced(cfg, cells, records, out)
    return write_manifest(cfg, records, artifacts, out)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def _stderr(values):
    return float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else ""


def _write_reduced(cfg, cells, records, out: Path) -> list[str]:
    ok = [(c, r) for c, r in zip(cells, records) if r["status"] in ("ok", "violated")]
    written = []
    if cfg.kind == "bounds" or cfg.kind == "closedness":
        name = "bounds.csv" if cfg.kind == "bounds" else "closedness.csv"
        _write_csv(out / name, CHECK_COLUMNS, [row for _, r in ok for row in r["rows"]])
        written.append(name)
        offending = [item for _, r in ok for item in r.get("offending", [])]
        if offending:
            (out / "offending.yaml").write_text(yaml.safe_dump(offending, sort_keys=False), encoding="utf-8")
            written.append("offending.yaml")
        return written

    learned = [(c, r) for c, r in ok if "summary" in r]
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [[r["summary"][k] for k in SUMMARY_COLUMNS] for _, r in learned])
    written.append("summary.csv")
    _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_rows(learned))
    written.append("aggregate.csv")
    if cfg.mode == "dp":
        means = [[r["summary"]["run_id"], c.algorithm, a, est, true, greedy]
                 for c, r in learned for a, est, true, greedy in r["extras"]["means"]]
        _write_csv(out / "start_means.csv", ["run_id", "algorithm", "action", "estimated_mean", "true_mean",
                                             "greedy_action"], means)
        imputed = [[r["summary"]["run_id"], c.algorithm, x, a, var, tvar, w1, iqr]
                   for c, r in learned for x, a, var, tvar, w1, iqr, _, _ in r["extras"]["imputed"]]
        _write_csv(out / "imputed_summary.csv", ["run_id", "algorithm", "state", "action", "imputed_variance",
                                                 "true_variance", "w1_to_truth", "true_iqr"], imputed)
        atoms = [[r["summary"]["run_id"], x, a, z, w]
                 for _, r in learned for x, a, *_, zs, ws in r["extras"]["imputed"] for z, w in zip(zs, ws)]
        _write_csv(out / "imputed_atoms.csv", ["run_id", "state", "action", "atom", "weight"], atoms)
        written += ["start_means.csv", "imputed_summary.csv", "imputed_atoms.csv"]
    return written


def aggregate_rows(learned) -> list[list]:
    """Mean and standard error over seeds for every (algorithm, K, environment) group."""
    groups: dict = {}
    for cell, rec in learned:
        key = (cell.algorithm, rec["summary"]["K"], cell.env.label)
        groups.setdefault(key, (cell.env, []))[1].append(rec)
    rows = []
    for (algorithm, k, _), (env, recs) in sorted(groups.items()):
        chain_len = env.length if env.name != "control" else ""
        head = [algorithm, k, env.label, chain_len, env.reward_label]
        n = len(recs)
        for metric in ("avg_stat_error", "sup_stat_error", "w1_error"):
            vals = [r["summary"][metric] for r in recs]
            rows.append(head + ["", metric, "", "", float(np.mean(vals)), _stderr(vals), n, ""])
        for x in sorted(recs[0]["extras"]["state_errors"]):
            vals = [r["extras"]["state_errors"][x] for r in recs]
            rows.append(head + [x, "state_stat_error", "", "", float(np.mean(vals)), _stderr(vals), n, ""])
        for i, param, _, true in recs[0]["extras"]["start_values"]:
            vals = [r["extras"]["start_values"][i][2] for r in recs]
            rows.append(head + ["", "learned_value", i, param, float(np.mean(vals)), _stderr(vals), n, true])
    return rows


def write_manifest(cfg: ExperimentConfig, records, artifacts, out: Path) -> dict:
    manifest = {
        "schema_version": cfg.schema_version,
        "library": {"name": "statdrl", "version": package_version()},
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "cells": [{k: rec[k] for k in ("run_id", "status", "wall_time_s", "error", "artifact") if k in rec}
                  for rec in records],
        "artifacts": sorted(artifacts),
        "failed": sum(rec["status"] != "ok" for rec in records),
    }
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False), encoding="utf-8")
    return manifest


# plot data -------------------------------------------------------------------------------------------------------


class SchemaError(ValueError):
    pass


def _read_aggregate(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in AGGREGATE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path} lacks columns: {', '.join(missing)}")
        return list(reader)


def emit_plotdata(aggregate: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """One tidy file per figure panel found in ``aggregate``.

    Start-state statistics give ``tau, learned_value, true_value, algorithm``
    per environment and K; errors against K give
    ``K, chain_len, algorithm, mean_error, stderr, n_seeds`` per terminal
    reward; errors against the distance to the goal are written per
    environment. Output is sorted, so reruns produce identical files.
    """
    aggregate = Path(aggregate)
    rows = _read_aggregate(aggregate)
    out = Path(out_dir) if out_dir is not None else aggregate.parent / "plotdata"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    rewards = sorted({r["reward"] for r in rows})

    def suffix(*parts):
        return "".join(f"_{p}" for p in parts if p)

    values = [r for r in rows if r["metric"] == "learned_value"]
    for env, k in sorted({(r["env"], int(r["K"])) for r in values}):
        sel = [r for r in values if r["env"] == env and int(r["K"]) == k]
        sel.sort(key=lambda r: (r["algorithm"], int(r["stat_index"])))
        path = out / f"start_statistics_{env}_K{k}.csv"
        _write_csv(path, ["tau", "learned_value", "true_value", "algorithm"],
                   [[r["tau_or_param"], r["mean"], r["true_value"], r["algorithm"]] for r in sel])
        written.append(path)

    for metric, stem in (("avg_stat_error", "stat_error_by_k"), ("w1_error", "w1_error_by_k")):
        for reward in rewards:
            sel = [r for r in rows if r["metric"] == metric and r["reward"] == reward and r["chain_len"] != ""]
            if not sel:
                continue
            sel.sort(key=lambda r: (r["algorithm"], int(r["chain_len"]), int(r["K"])))
            path = out / f"{stem}{suffix(reward if len(rewards) > 1 else '')}.csv"
            _write_csv(path, ["K", "chain_len", "algorithm", "mean_error", "stderr", "n_seeds"],
                       [[r["K"], r["chain_len"], r["algorithm"], r["mean"], r["stderr"], r["n_seeds"]] for r in sel])
            written.append(path)

    by_state = [r for r in rows if r["metric"] == "state_stat_error" and r["chain_len"] != ""]
    for env in sorted({r["env"] for r in by_state}):
        sel = [r for r in by_state if r["env"] == env]
        sel.sort(key=lambda r: (r["algorithm"], int(r["K"]), int(r["state"])))
        path = out / f"stat_error_by_distance_{env}.csv"
        _write_csv(path, ["K", "distance", "algorithm", "mean_error", "stderr", "n_seeds"],
                   [[r["K"], int(r["chain_len"]) - 1 - int(r["state"]), r["algorithm"], r["mean"], r["stderr"],
                     r["n_seeds"]] for r in sel])
        written.append(path)

    manifest = aggregate.parent / "manifest.yaml"
    if manifest.exists():
        data = yaml.safe_load(manifest.read_text(encoding="utf-8"))
        rel = {os.path.relpath(p, aggregate.parent) for p in written}
        data["artifacts"] = sorted(set(data.get("artifacts", [])) | rel)
        manifest.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
    return written
