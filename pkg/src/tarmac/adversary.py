"""Passive traffic analysis over a transmission log.

The analyst sees only ``(sender, start, duration, bytes, kind)`` per
transmission, plus node positions and radio range. It never sees frame
contents, queue states or routes; ground-truth forwarding edges are used only
to score how many of them the tracer recovered.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from tarmac.radio import TX_LOG_COLUMNS, Topology, TransmissionRecord

DEFAULT_WINDOW_US = 50_000
DEFAULT_SHUFFLES = 20
DEFAULT_MIN_SUPPORT = 2


@dataclass(frozen=True)
class TxLog:
    """Column arrays of a transmission log. Deliberately has no payload field."""

    sender: np.ndarray
    start: np.ndarray
    duration: np.ndarray
    nbytes: np.ndarray
    kind: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.sender)

    @property
    def end(self) -> np.ndarray:
        return self.start + self.duration

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, int, int, int, str]]) -> TxLog:
        rows = list(rows)
        if not rows:
            z = np.zeros(0, dtype=np.int64)
            return cls(z, z.copy(), z.copy(), z.copy(), ())
        s, st, d, b, k = zip(*rows)
        return cls(
            np.asarray(s, dtype=np.int64),
            np.asarray(st, dtype=np.int64),
            np.asarray(d, dtype=np.int64),
            np.asarray(b, dtype=np.int64),
            tuple(k),
        )

    @classmethod
    def from_records(cls, records: Iterable[TransmissionRecord]) -> TxLog:
        return cls.from_rows((r.sender, r.start, r.duration, r.bytes, r.kind) for r in records)

    def window(self, lo: int, hi: int) -> TxLog:
        m = (self.start >= lo) & (self.start < hi)
        kinds = tuple(k for k, keep in zip(self.kind, m) if keep) if self.kind else ()
        return TxLog(self.sender[m], self.start[m], self.duration[m], self.nbytes[m], kinds)


def read_tx_log(path) -> TxLog:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TX_LOG_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(TX_LOG_COLUMNS)}")
        return TxLog.from_rows(
            (int(a), int(b), int(c), int(d), e) for a, b, c, d, e in reader
        )


def _per_node(log: TxLog, n_nodes: int, starts: np.ndarray | None = None):
    starts = log.start if starts is None else starts
    order = np.lexsort((starts, log.sender))
    snd = log.sender[order]
    st = starts[order]
    du = log.duration[order]
    bounds = np.searchsorted(snd, np.arange(n_nodes + 1))
    return [(st[bounds[i]:bounds[i + 1]], st[bounds[i]:bounds[i + 1]] + du[bounds[i]:bounds[i + 1]]) for i in range(n_nodes)]


def _reaction_fractions(per_node, topology: Topology, window_us: int) -> np.ndarray:
    """For each node, the fraction of its sends starting within ``window_us``
    after some in-range transmission ended. NaN for silent nodes."""
    n = len(topology)
    out = np.full(n, np.nan)
    for i in range(n):
        sends = per_node[i][0]
        if len(sends) == 0:
            continue
        nb = topology.neighbor_lists[i]
        if not nb:
            out[i] = 0.0
            continue
        ends = np.sort(np.concatenate([per_node[j][1] for j in nb]))
        if len(ends) == 0:
            out[i] = 0.0
            continue
        idx = np.searchsorted(ends, sends, side="right")
        prev = ends[np.maximum(idx - 1, 0)]
        hit = (idx > 0) & (prev >= sends - window_us)
        out[i] = hit.mean()
    return out


def score_time_correlation(
    log: TxLog,
    topology: Topology,
    window_us: int = DEFAULT_WINDOW_US,
    shuffles: int = DEFAULT_SHUFFLES,
    seed: int = 0,
    span: int | None = None,
) -> float:
    """Send-after-receive excess over a circularly time-shifted null, in [0, 1].

    The null shifts every node's send times by its own uniform offset modulo
    the observation span, which keeps per-node rates and spacing but breaks
    any alignment between nodes.
    """
    if len(log) == 0:
        return 0.0
    n = len(topology)
    t0 = 0
    t1 = int(log.end.max()) if span is None else span
    length = max(1, t1 - t0)
    real = _reaction_fractions(_per_node(log, n), topology, window_us)
    active = ~np.isnan(real)
    rng = np.random.default_rng(seed)
    null = np.zeros(n)
    for _ in range(shuffles):
        offsets = rng.integers(0, length, size=n)
        shifted = (log.start - t0 + offsets[log.sender]) % length + t0
        null += np.nan_to_num(_reaction_fractions(_per_node(log, n, shifted), topology, window_us))
    if shuffles:
        null /= shuffles
    score = float(np.mean(real[active]) - np.mean(null[active]))
    return min(1.0, max(0.0, score))


def transmission_counts(log: TxLog, n_nodes: int) -> np.ndarray:
    return np.bincount(log.sender, minlength=n_nodes)[:n_nodes]


def score_spatial_cv(log: TxLog, n_nodes: int, window: tuple[int, int] | None = None) -> float:
    """Coefficient of variation (population std / mean) of per-node send counts."""
    if window is not None:
        log = log.window(*window)
    if len(log) == 0:
        return 0.0
    counts = transmission_counts(log, n_nodes).astype(float)
    mean = counts.mean()
    if mean == 0:
        return 0.0
    return float(counts.std() / mean)


def quiet_window(log: TxLog, lo: int, hi: int, period: int, guard_us: int = 5_000, step_us: int = 1_000) -> tuple[int, int] | None:
    """A window ``[a, a + k*period)`` inside ``[lo, hi)`` whose two edges have no
    transmission starting within ``guard_us``. Counting sends over such a
    window is immune to small send-time deferrals near the edges."""
    starts = np.sort(log.start)

    def quiet(t):
        i = np.searchsorted(starts, t - guard_us, side="left")
        return i >= len(starts) or starts[i] > t + guard_us

    a = lo
    while a + period <= hi:
        k = (hi - a) // period
        if quiet(a) and quiet(a + k * period):
            return a, a + k * period
        a += step_us
    return None


def trace_flows(
    log: TxLog,
    topology: Topology,
    window_us: int = DEFAULT_WINDOW_US,
    min_support: int = DEFAULT_MIN_SUPPORT,
) -> set[tuple[int, int]]:
    """Greedy relay tracer: claim edge a->b when b (in range of a) starts a
    transmission within ``window_us`` after one of a's transmissions ended, at
    least ``min_support`` times."""
    if len(log) == 0:
        return set()
    per_node = _per_node(log, len(topology))
    claimed = set()
    for a in range(len(topology)):
        ends = np.sort(per_node[a][1])
        if len(ends) == 0:
            continue
        for b in topology.neighbor_lists[a]:
            starts = per_node[b][0]
            if len(starts) == 0:
                continue
            idx = np.searchsorted(starts, ends, side="right")
            ok = idx < len(starts)
            nxt = starts[np.minimum(idx, len(starts) - 1)]
            support = int(np.count_nonzero(ok & (nxt <= ends + window_us)))
            if support >= min_support:
                claimed.add((a, b))
    return claimed


def trace_recovery(claimed: set[tuple[int, int]], truth: set[tuple[int, int]]) -> float:
    if not truth:
        return 0.0
    return len(claimed & truth) / len(truth)


@dataclass
class AttackReport:
    time_correlation: float
    spatial_cv: float
    trace_recovery: float | None
    per_node_rate_map: dict[int, float] = field(default_factory=dict)
    claimed_edges: set[tuple[int, int]] = field(default_factory=set)
    true_edges: int | None = None


def analyze(
    log: TxLog,
    topology: Topology,
    truth: set[tuple[int, int]] | None = None,
    window_us: int = DEFAULT_WINDOW_US,
    shuffles: int = DEFAULT_SHUFFLES,
    seed: int = 0,
    observed_us: int | None = None,
) -> AttackReport:
    n = len(topology)
    claimed = trace_flows(log, topology, window_us)
    span = observed_us or (int(log.end.max()) if len(log) else 0)
    counts = transmission_counts(log, n) if len(log) else np.zeros(n, dtype=int)
    rates = {i: (float(counts[i]) / (span / 1e6) if span else 0.0) for i in range(n)}
    return AttackReport(
        time_correlation=score_time_correlation(log, topology, window_us, shuffles, seed),
        spatial_cv=score_spatial_cv(log, n),
        trace_recovery=None if truth is None else trace_recovery(claimed, truth),
        per_node_rate_map=rates,
        claimed_edges=claimed,
        true_edges=None if truth is None else len(truth),
    )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 9))
    return str(v)


def write_attack_report(path, report: AttackReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("key", "value"))
        w.writerow(("time_correlation", _fmt(report.time_correlation)))
        w.writerow(("spatial_cv", _fmt(report.spatial_cv)))
        w.writerow(("trace_recovery", _fmt(report.trace_recovery)))
        w.writerow(("claimed_edges", len(report.claimed_edges)))
        w.writerow(("true_edges", _fmt(report.true_edges)))
        for node, rate in sorted(report.per_node_rate_map.items()):
            w.writerow((f"rate.{node}", _fmt(rate)))


def format_report(report: AttackReport) -> str:
    rates = list(report.per_node_rate_map.values())
    lo, hi = (min(rates), max(rates)) if rates else (0.0, 0.0)
    rec = "n/a (no ground truth)" if report.trace_recovery is None else f"{report.trace_recovery:.3f}"
    return "\n".join([
        f"time correlation : {report.time_correlation:.4f}",
        f"spatial CV       : {report.spatial_cv:.4f}",
        f"trace recovery   : {rec}",
        f"claimed edges    : {len(report.claimed_edges)}",
        f"per-node rate    : {lo:.3f} .. {hi:.3f} sends/s",
    ])


def cv_of_one_hot(n_nodes: int) -> float:
    return math.sqrt(n_nodes - 1)
