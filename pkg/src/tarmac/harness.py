"""Run one configuration to disk, or a whole sweep of them."""

from __future__ import annotations

import logging
import math
import os
from statistics import mean, stdev
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence, TextIO

from tarmac.adversary import TxLog, analyze, write_attack_report
from tarmac.config import RunConfig, dump_config
from tarmac.metrics import METRIC_COLUMNS, metric_row, write_rows
from tarmac.radio import write_tx_log
from tarmac.simulation import RunResult, run_simulation

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "TARMAC_OUTPUT_ROOT"
CONFIG_COLUMNS = tuple(f.name for f in fields(RunConfig) if f.name != "output_dir")
SUMMARY_COLUMNS = (*CONFIG_COLUMNS, "config_hash", *METRIC_COLUMNS)
GROUP_COLUMNS = tuple(c for c in CONFIG_COLUMNS if c != "seed")
AGGREGATE_COLUMNS = (
    *GROUP_COLUMNS, "seeds",
    *(f"{m}_{stat}" for m in METRIC_COLUMNS for stat in ("mean", "ci95")),
)
# two-sided 95% Student t quantiles by degrees of freedom; normal beyond the table
_T975 = (12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
         2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
         2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042)


class RunFailure(RuntimeError):
    """A simulation or its output failed; the CLI maps this to exit status 2."""


def output_root(explicit: str | None = None) -> Path:
    return Path(explicit or os.environ.get(OUTPUT_ROOT_ENV) or ".")


def summary_row(cfg: RunConfig, result: RunResult) -> dict[str, str]:
    row = {k: str(getattr(cfg, k)) for k in CONFIG_COLUMNS}
    row["config_hash"] = cfg.digest()
    row.update(metric_row(result.summary))
    return row


def write_run(cfg: RunConfig, out_dir: Path, trace: TextIO | None = None) -> dict[str, str]:
    """Simulate ``cfg`` and write summary.csv, tx_log.csv and attack_report.csv."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RunFailure(f"output directory {out_dir} is not writable: {exc}") from None
    result = run_simulation(cfg, trace)
    net = result.network
    report = analyze(
        TxLog.from_records(result.records), net.topology, net.true_edges,
        seed=cfg.seed, observed_us=cfg.sim_end_us,
    )
    row = summary_row(cfg, result)
    try:
        write_rows(out_dir / "summary.csv", SUMMARY_COLUMNS, [row])
        write_tx_log(out_dir / "tx_log.csv", result.records)
        write_attack_report(out_dir / "attack_report.csv", report)
        (out_dir / "config.txt").write_text(dump_config(cfg))
    except OSError as exc:
        raise RunFailure(f"cannot write results to {out_dir}: {exc}") from None
    return row


def _ci95(values: list[float]) -> float | None:
    if len(values) < 2:
        return None
    t = _T975[len(values) - 2] if len(values) - 1 <= len(_T975) else 1.96
    return t * stdev(values) / math.sqrt(len(values))


def aggregate_rows(rows: Sequence[dict[str, str]]) -> list[dict[str, str]]:
    """Collapse seeds: one row per config with the mean and 95% confidence
    half-width of every metric. Empty metric cells (undefined ratios) are
    left out of that metric's statistics."""
    groups: dict[tuple, list[dict[str, str]]] = {}
    for row in rows:
        groups.setdefault(tuple(row[c] for c in GROUP_COLUMNS), []).append(row)
    out = []
    for key, members in groups.items():
        agg = dict(zip(GROUP_COLUMNS, key))
        agg["seeds"] = str(len(members))
        for m in METRIC_COLUMNS:
            vals = [float(r[m]) for r in members if r[m] != ""]
            mu = mean(vals) if vals else None
            ci = _ci95(vals)
            agg[f"{m}_mean"] = "" if mu is None else repr(round(mu, 9))
            agg[f"{m}_ci95"] = "" if ci is None else repr(round(ci, 9))
        out.append(agg)
    return out


def _sweep_job(args):
    cfg, run_dir = args
    return write_run(cfg, Path(run_dir))


@dataclass
class SweepOutcome:
    rows: list[dict[str, str]]
    failed: list[tuple[RunConfig, str]]
    path: Path


def run_sweep(configs: Sequence[RunConfig], out_dir: Path, jobs: int = 1) -> SweepOutcome:
    """Run every config, each into ``out_dir/runs/<config hash>``, and write
    ``sweep.csv`` (one row per run, input order) plus ``aggregate.csv``
    (seeds collapsed). The first failure stops the sweep; rows finished so
    far are still written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, str(out_dir / "runs" / cfg.digest())) for cfg in configs]
    rows: dict[int, dict[str, str]] = {}
    failed: list[tuple[RunConfig, str]] = []
    path = out_dir / "sweep.csv"

    def flush():
        done = [rows[i] for i in sorted(rows)]
        write_rows(path, SUMMARY_COLUMNS, done)
        write_rows(out_dir / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_rows(done))

    if jobs <= 1:
        for i, task in enumerate(tasks):
            log.info("run %d/%d %s", i + 1, len(tasks), task[0].digest())
            try:
                rows[i] = _sweep_job(task)
            except Exception as exc:
                failed.append((task[0], str(exc)))
                break
            flush()
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_job, t) for t in tasks]
            for i, fut in enumerate(futures):
                try:
                    rows[i] = fut.result()
                except Exception as exc:
                    failed.append((tasks[i][0], str(exc)))
                    for rest in futures[i + 1:]:
                        rest.cancel()
                    break
    flush()
    return SweepOutcome([rows[i] for i in sorted(rows)], failed, path)
