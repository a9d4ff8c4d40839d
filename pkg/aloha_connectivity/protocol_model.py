"""
Slotted ALOHA on a point set under the protocol model.

In every slot each node transmits independently with probability p. A
transmitter x reaches a receiver y iff ||x - y|| < eta and the open disk
B(y, beta * ||x - y||) holds no transmitter other than x.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from aloha_connectivity import analytics
from aloha_connectivity.exceptions import HorizonTooShortError
from aloha_connectivity.pointprocess import (
    NetworkConfig,
    PointSet,
    interior_mask,
    nearest_neighbor,
    neighbor_pairs,
    range_query,
    replication_stream,
    sample_ppp,
    with_probe,
)

LOGGER = logging.getLogger(__name__)

# estimators refuse results with more censoring than this unless divergence is expected
MAX_CENSORED_FRACTION = 0.5


@dataclass(frozen=True, eq=False)
class SlotState:
    """ALOHA roles of every node in one slot."""

    slot: int
    is_transmitter: np.ndarray

    @property
    def transmitters(self) -> np.ndarray:
        return np.flatnonzero(self.is_transmitter)

    @property
    def receivers(self) -> np.ndarray:
        return np.flatnonzero(~self.is_transmitter)


@dataclass(frozen=True, eq=False)
class SnapshotGraph:
    """Directed links g(k) of one slot, rows (tx, rx) sorted lexicographically."""

    slot: int
    edges: np.ndarray

    def out_degree(self, count: int) -> np.ndarray:
        return np.bincount(self.edges[:, 0], minlength=count)

    def in_degree(self, count: int) -> np.ndarray:
        return np.bincount(self.edges[:, 1], minlength=count)


def sample_slot(ps: PointSet, p: float, stream: np.random.Generator, slot: int = 0) -> SlotState:
    """Draw the transmitter flags of one slot (exactly ps.count uniforms)."""
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return SlotState(slot, stream.random(ps.count) < p)


def links(ps: PointSet, is_transmitter: np.ndarray, senders, beta: float, eta: float, listeners=None):
    """
    Successful links out of ``senders`` in a slot with the given roles.

    Parameters
    ----------
    senders: array of node ids
        Transmitters whose outgoing links are wanted, interference comes from
        every transmitter flagged in is_transmitter
    listeners: np.ndarray, optional
        Boolean mask restricting which receivers may be reached

    Returns
    -------
    (tx, rx, distance) arrays sorted by (tx, rx)
    """
    tx, rx, dist = neighbor_pairs(ps, eta, query=senders)
    usable = ~is_transmitter[rx]
    if listeners is not None:
        usable &= listeners[rx]
    tx, rx, dist = tx[usable], rx[usable], dist[usable]
    if rx.size == 0:
        return tx, rx, dist

    guard = beta * (eta if math.isfinite(eta) else float(dist.max()))
    y, w, dw = neighbor_pairs(ps, guard, query=np.unique(rx))
    active = is_transmitter[w]
    y, w, dw = y[active], w[active], dw[active]

    # nearest and second nearest transmitter around every listener
    nearest = np.full(ps.count, np.inf)
    nearest_id = np.full(ps.count, -1)
    second = np.full(ps.count, np.inf)
    order = np.lexsort((w, dw, y))
    y, w, dw = y[order], w[order], dw[order]
    lead = np.flatnonzero(np.r_[True, y[1:] != y[:-1]]) if y.size else np.empty(0, dtype=np.intp)
    nearest[y[lead]] = dw[lead]
    nearest_id[y[lead]] = w[lead]
    follow = lead + 1
    follow = follow[follow < y.size]
    follow = follow[y[follow] == y[follow - 1]]
    second[y[follow]] = dw[follow]

    interferer = np.where(nearest_id[rx] == tx, second[rx], nearest[rx])
    ok = interferer >= beta * dist
    tx, rx, dist = tx[ok], rx[ok], dist[ok]
    order = np.lexsort((rx, tx))
    return tx[order], rx[order], dist[order]


def edge_indicator(ps: PointSet, slot: SlotState, tx: int, rx: int, beta: float, eta: float) -> bool:
    """Protocol-model success of the single link tx -> rx in this slot."""
    if tx == rx:
        raise ValueError(f"A node cannot link to itself (node {tx})")
    if not slot.is_transmitter[tx]:
        raise ValueError(f"Node {tx} is not a transmitter in slot {slot.slot}")
    if slot.is_transmitter[rx]:
        raise ValueError(f"Node {rx} is not a receiver in slot {slot.slot}")
    dist = float(ps.distance_between(tx, rx))
    if not dist < eta:
        return False
    around = range_query(ps, ps.positions[rx], beta * dist)
    interferers = around[(around != tx) & slot.is_transmitter[around]]
    return interferers.size == 0


def snapshot_graph(ps: PointSet, slot: SlotState, beta: float, eta: float) -> SnapshotGraph:
    """All links of slot k."""
    tx, rx, _ = links(ps, slot.is_transmitter, slot.transmitters, beta, eta)
    return SnapshotGraph(slot.slot, np.column_stack([tx, rx]).astype(np.intp).reshape(-1, 2))


def ratio_mean(totals, counts):
    """
    Pooled mean sum(totals) / sum(counts) and its standard error across
    replications (delta method for a ratio estimator).
    """
    totals = np.asarray(totals, dtype=float)
    counts = np.asarray(counts, dtype=float)
    pooled = counts.sum()
    if pooled == 0:
        return math.nan, math.nan
    mean = totals.sum() / pooled
    reps = len(totals)
    if reps < 2:
        return mean, math.nan
    resid = totals - mean * counts
    return mean, math.sqrt(reps / (reps - 1) * float(np.sum(resid ** 2))) / pooled


@dataclass(frozen=True, eq=False)
class DegreeSample:
    """Per-node degrees of one replication (counted nodes only)."""

    out_degrees: np.ndarray
    in_degrees: np.ndarray

    @property
    def isolated(self) -> int:
        return int(np.count_nonzero(self.out_degrees == 0))


@dataclass(frozen=True, eq=False)
class DegreeStats:
    """Pooled out/in-degree statistics over replications."""

    p: float
    replications: int
    out_histogram: np.ndarray
    in_histogram: np.ndarray
    mean_out: float
    se_out: float
    mean_in: float
    se_in: float
    isolated_fraction: float
    se_isolated: float
    max_in_degree: int

    @property
    def n_transmitters(self) -> int:
        return int(self.out_histogram.sum())

    @property
    def n_receivers(self) -> int:
        return int(self.in_histogram.sum())

    def flow_identity_gap(self):
        """p E[N_t] - (1 - p) E[N_r] with its combined standard error."""
        gap = self.p * self.mean_out - (1 - self.p) * self.mean_in
        se = math.hypot(self.p * self.se_out, (1 - self.p) * self.se_in)
        return gap, se

    def histogram_frame(self, role: str) -> pd.DataFrame:
        counts = {"out": self.out_histogram, "in": self.in_histogram}[role]
        total = counts.sum()
        return pd.DataFrame({
            "degree": np.arange(len(counts)),
            "count": counts,
            "fraction": counts / total if total else np.zeros(len(counts)),
        })

    def write_histograms_csv(self, path) -> None:
        """One table with a role column ('out' / 'in')."""
        frames = [self.histogram_frame(role).assign(role=role) for role in ("out", "in")]
        table = pd.concat(frames, ignore_index=True)[["role", "degree", "count", "fraction"]]
        table.to_csv(path, index=False)


def degree_sample(config: NetworkConfig, stream: np.random.Generator) -> DegreeSample:
    """One PPP + one slot, degrees of the nodes counted for statistics."""
    ps = sample_ppp(config, stream)
    slot = sample_slot(ps, config.p, stream, slot=1)
    graph = snapshot_graph(ps, slot, config.beta, config.eta)
    counted = interior_mask(ps, max(config.eta, config.beta * config.eta))
    return DegreeSample(
        out_degrees=graph.out_degree(ps.count)[slot.is_transmitter & counted],
        in_degrees=graph.in_degree(ps.count)[~slot.is_transmitter & counted],
    )


def reduce_degrees(samples: Sequence[DegreeSample], p: float) -> DegreeStats:
    """Order-independent pooling of per-replication degree samples."""
    width = 1 + max([int(s.out_degrees.max(initial=0)) for s in samples] + [0])
    in_width = 1 + max([int(s.in_degrees.max(initial=0)) for s in samples] + [0])
    out_hist = np.zeros(width, dtype=np.int64)
    in_hist = np.zeros(in_width, dtype=np.int64)
    for sample in samples:
        out_hist += np.bincount(sample.out_degrees, minlength=width)
        in_hist += np.bincount(sample.in_degrees, minlength=in_width)

    n_tx = [s.out_degrees.size for s in samples]
    n_rx = [s.in_degrees.size for s in samples]
    mean_out, se_out = ratio_mean([s.out_degrees.sum() for s in samples], n_tx)
    mean_in, se_in = ratio_mean([s.in_degrees.sum() for s in samples], n_rx)
    isolated, se_isolated = ratio_mean([s.isolated for s in samples], n_tx)
    return DegreeStats(
        p=p,
        replications=len(samples),
        out_histogram=out_hist,
        in_histogram=in_hist,
        mean_out=mean_out,
        se_out=se_out,
        mean_in=mean_in,
        se_in=se_in,
        isolated_fraction=isolated,
        se_isolated=se_isolated,
        max_in_degree=in_width - 1,
    )


def estimate_degrees(config: NetworkConfig, replications: int) -> DegreeStats:
    """Monte Carlo out/in-degree statistics, replication r uses stream (seed, 0, r)."""
    if replications < 1:
        raise ValueError(f"replications must be at least 1, got {replications}")
    samples = [degree_sample(config, replication_stream(config.seed, 0, r)) for r in range(replications)]
    stats = reduce_degrees(samples, config.p)
    LOGGER.info(
        f"Degrees over {replications} replications: E[N_t]={stats.mean_out:.4f} (se {stats.se_out:.4f}), "
        f"E[N_r]={stats.mean_in:.4f} (se {stats.se_in:.4f})"
    )
    return stats


def _first_success(stream: np.random.Generator, p: float, interferers: int, max_slots: int) -> Optional[int]:
    """
    First slot where node 0 transmits, node 1 listens and all interferers
    are silent. Column layout per slot: [sender, listener, interferers...].
    """
    done = 0
    chunk = 64
    while done < max_slots:
        rows = min(chunk, max_slots - done)
        draws = stream.random((rows, interferers + 2))
        ok = (draws[:, 0] < p) & np.all(draws[:, 1:] >= p, axis=1)
        hit = np.flatnonzero(ok)
        if hit.size:
            return done + int(hit[0]) + 1
        done += rows
        chunk = min(2 * chunk, 1 << 16)
    return None


def nn_connect_time(ps: PointSet, probe: int, p: float, beta: float, max_slots: int,
                    stream: np.random.Generator) -> Optional[int]:
    """
    Slots until probe -> nearest neighbour succeeds (interference limited),
    None when censored at max_slots.
    """
    neighbor, dist = nearest_neighbor(ps, probe)
    around = range_query(ps, ps.positions[neighbor], beta * dist)
    interferers = around[(around != probe) & (around != neighbor)]
    return _first_success(stream, p, interferers.size, max_slots)


def opportunistic_connect_time(ps: PointSet, probe: int, p: float, beta: float, eta: float, max_slots: int,
                               stream: np.random.Generator) -> Optional[int]:
    """Slots until the probe transmits and reaches at least one receiver, None when censored."""
    sender = np.array([probe])
    for k in range(1, max_slots + 1):
        slot = sample_slot(ps, p, stream, slot=k)
        if not slot.is_transmitter[probe]:
            continue
        _, rx, _ = links(ps, slot.is_transmitter, sender, beta, eta)
        if rx.size:
            return k
    return None


def nn_time_sample(config: NetworkConfig, stream: np.random.Generator) -> Optional[int]:
    ps, probe = with_probe(sample_ppp(config, stream))
    return nn_connect_time(ps, probe, config.p, config.beta, config.max_slots, stream)


def opportunistic_time_sample(config: NetworkConfig, stream: np.random.Generator) -> Optional[int]:
    ps, probe = with_probe(sample_ppp(config, stream))
    return opportunistic_connect_time(ps, probe, config.p, config.beta, config.eta, config.max_slots, stream)


@dataclass(frozen=True)
class EstimatorSummary:
    """Mean connection time over uncensored runs plus censoring evidence."""

    estimate: float
    std_error: float
    n: int
    censored_fraction: float
    diverges: bool
    samples: List[int] = field(default_factory=list, repr=False)

    @property
    def ci(self):
        """Normal 95% interval around the estimate."""
        return self.estimate - 1.96 * self.std_error, self.estimate + 1.96 * self.std_error

    def to_record(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n": self.n,
            "censored_fraction": self.censored_fraction,
            "diverges": self.diverges,
        }


def summarize_connect_times(delays: Sequence[Optional[int]], diverges: bool) -> EstimatorSummary:
    uncensored = np.array([d for d in delays if d is not None], dtype=float)
    censored = len(delays) - uncensored.size
    if uncensored.size == 0:
        estimate, se = math.inf, math.nan
    else:
        estimate = float(uncensored.mean())
        se = float(uncensored.std(ddof=1) / math.sqrt(uncensored.size)) if uncensored.size > 1 else math.nan
    return EstimatorSummary(
        estimate=estimate,
        std_error=se,
        n=len(delays),
        censored_fraction=censored / len(delays) if delays else math.nan,
        diverges=diverges,
        samples=[int(d) for d in uncensored],
    )


def _check_censoring(summary: EstimatorSummary, config: NetworkConfig, what: str) -> None:
    if summary.censored_fraction > 0:
        LOGGER.warning(f"{what}: {summary.censored_fraction:.1%} of runs censored at max_slots={config.max_slots}")
    if summary.censored_fraction > MAX_CENSORED_FRACTION and not summary.diverges:
        raise HorizonTooShortError(
            f"{what}: {summary.censored_fraction:.1%} of runs hit max_slots={config.max_slots} "
            f"although the mean is finite, increase max_slots"
        )


def _require_interference_limited(config: NetworkConfig) -> None:
    if not config.interference_limited:
        raise ValueError(f"Connection-time estimators need eta = inf (interference limited), got eta={config.eta}")


def estimate_nn_connect_time(config: NetworkConfig, replications: int) -> EstimatorSummary:
    """Monte Carlo E[T_N] (nearest-neighbour connection time)."""
    _require_interference_limited(config)
    if replications < 1:
        raise ValueError(f"replications must be at least 1, got {replications}")
    diverges = config.p >= analytics.aloha_cutoff(config.beta)
    delays = [nn_time_sample(config, replication_stream(config.seed, 0, r)) for r in range(replications)]
    summary = summarize_connect_times(delays, diverges)
    _check_censoring(summary, config, "nearest-neighbour connection time")
    return summary


def opportunistic_diverges(p: float, beta: float) -> bool:
    """The opportunistic lower bound is already infinite (beta > 1 only)."""
    return beta > 1 and math.isinf(analytics.opportunistic_time_lb(p, beta))


def estimate_opportunistic_time(config: NetworkConfig, replications: int) -> EstimatorSummary:
    """Monte Carlo E[T_O] (slots until the probe reaches any receiver)."""
    _require_interference_limited(config)
    if replications < 1:
        raise ValueError(f"replications must be at least 1, got {replications}")
    diverges = opportunistic_diverges(config.p, config.beta)
    delays = [opportunistic_time_sample(config, replication_stream(config.seed, 0, r)) for r in range(replications)]
    summary = summarize_connect_times(delays, diverges)
    _check_censoring(summary, config, "opportunistic connection time")
    return summary
