"""
Propagation over the causal multigraph G(0, n).

A packet held by node u at the end of slot k - 1 can be forwarded along any
link u -> y of slot k. Running that wavefront slot by slot gives the path
formation time T(source, y) for every node at once, and a hop-count DP over
the same links gives the fewest hops among delay-optimal (fastest) paths.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from aloha_connectivity.pointprocess import NetworkConfig, PointSet, closest_node
from aloha_connectivity.protocol_model import links, sample_slot

LOGGER = logging.getLogger(__name__)

HOP_UPDATE = np.dtype([("node", np.int64), ("slot", np.int64), ("hops", np.int64), ("parent", np.int64)])


@dataclass(frozen=True, eq=False)
class PropagationFront:
    """
    Result of one propagation.

    first_arrival holds absolute slot numbers (the source carries start_slot,
    unreached nodes inf). min_hops is the hop DP at the horizon, fastest_hops
    its value at each node's first-arrival slot. history lists every hop DP
    improvement and is what fastest_path walks back through.
    """

    source: int
    start_slot: int
    first_arrival: np.ndarray
    min_hops: np.ndarray
    fastest_hops: np.ndarray
    horizon: int
    history: np.ndarray

    @property
    def reached(self) -> np.ndarray:
        return np.isfinite(self.first_arrival)

    @property
    def delays(self) -> np.ndarray:
        """Path formation times T measured from start_slot."""
        return self.first_arrival - self.start_slot


@dataclass(frozen=True)
class DelayRecord:
    """One source-destination measurement, delay and hops are None when censored."""

    replication: int
    distance: float
    node_distance: float
    delay: Optional[int]
    hops: Optional[int]
    censored: bool

    def as_row(self) -> dict:
        return {
            "replication": self.replication,
            "distance": self.distance,
            "node_distance": self.node_distance,
            "delay": math.nan if self.delay is None else self.delay,
            "hops": math.nan if self.hops is None else self.hops,
            "censored": self.censored,
        }


def propagate(ps: PointSet, source: int, config: NetworkConfig, stream: np.random.Generator,
              start_slot: int = 0, members=None, targets=None, max_slots=None) -> PropagationFront:
    """
    Simulate slots start_slot + 1 ... start_slot + max_slots from a packet at source.

    Parameters
    ----------
    members: np.ndarray, optional
        Boolean mask of nodes allowed to relay and receive (e.g. the giant
        component), every node still runs ALOHA and interferes
    targets: sequence of node ids, optional
        Stop after the slot in which all targets are reached
    max_slots: int, optional
        Overrides config.max_slots

    Every slot draws exactly ps.count uniforms from stream (one SlotState),
    so a replay of the same stream sees the same roles.
    """
    n = ps.count
    if not 0 <= source < n:
        raise ValueError(f"source must be a node id in [0, {n}), got {source}")
    horizon_len = config.max_slots if max_slots is None else int(max_slots)
    if horizon_len < 1:
        raise ValueError(f"max_slots must be at least 1, got {horizon_len}")
    relay = np.ones(n, dtype=bool) if members is None else np.asarray(members, dtype=bool)
    if not relay[source]:
        raise ValueError(f"source {source} is not a member of the relay set")
    targets = None if targets is None else np.asarray(targets, dtype=np.intp)

    first = np.full(n, np.inf)
    hops = np.full(n, np.inf)
    fastest = np.full(n, np.inf)
    first[source] = start_slot
    hops[source] = fastest[source] = 0
    updates = []

    horizon = start_slot
    for k in range(start_slot + 1, start_slot + horizon_len + 1):
        slot = sample_slot(ps, config.p, stream, slot=k)
        horizon = k
        senders = np.flatnonzero(slot.is_transmitter & np.isfinite(hops) & relay)
        if senders.size:
            tx, rx, _ = links(ps, slot.is_transmitter, senders, config.beta, config.eta, listeners=relay)
            if rx.size:
                cand = hops[tx] + 1
                # best (fewest hops, then smallest sender) link into each receiver
                order = np.lexsort((tx, cand, rx))
                tx, rx, cand = tx[order], rx[order], cand[order]
                lead = np.r_[True, rx[1:] != rx[:-1]]
                tx, rx, cand = tx[lead], rx[lead], cand[lead]

                fresh = np.isinf(first[rx])
                first[rx[fresh]] = k
                fastest[rx[fresh]] = cand[fresh]
                better = cand < hops[rx]
                hops[rx[better]] = cand[better]
                step = np.empty(int(better.sum()), dtype=HOP_UPDATE)
                step["node"], step["slot"], step["hops"], step["parent"] = rx[better], k, cand[better], tx[better]
                updates.append(step)
        if targets is not None and np.all(np.isfinite(first[targets])):
            break

    reached = int(np.isfinite(first).sum())
    LOGGER.debug(f"Propagation from {source}: {reached}/{n} nodes reached by slot {horizon}")
    history = np.concatenate(updates) if updates else np.empty(0, dtype=HOP_UPDATE)
    return PropagationFront(source, start_slot, first, hops, fastest, horizon, history)


def fastest_path(front: PropagationFront, node: int) -> List[tuple]:
    """
    A fastest path to node as (tx, rx, slot) edges with strictly increasing slots.

    Walks the hop DP history back: the update that gave node its hop count
    at its first arrival names the parent and the slot of the last edge.
    """
    if not front.reached[node]:
        raise ValueError(f"Node {node} was not reached by slot {front.horizon}")
    edges = []
    current, by, hops = node, front.first_arrival[node], front.fastest_hops[node]
    while hops > 0:
        rows = front.history[
            (front.history["node"] == current) & (front.history["hops"] == hops) & (front.history["slot"] <= by)
        ]
        step = rows[np.argmax(rows["slot"])]
        edges.append((int(step["parent"]), int(current), int(step["slot"])))
        current, by, hops = int(step["parent"]), int(step["slot"]) - 1, hops - 1
    edges.reverse()
    return edges


def _record(ps: PointSet, front: Optional[PropagationFront], src: int, dst: int, distance: float,
            replication: int) -> DelayRecord:
    node_distance = float(ps.distance_between(src, dst))
    if src == dst:
        return DelayRecord(replication, distance, node_distance, 0, 0, False)
    if not front.reached[dst]:
        return DelayRecord(replication, distance, node_distance, None, None, True)
    return DelayRecord(replication, distance, node_distance, int(front.delays[dst]), int(front.fastest_hops[dst]), False)


def path_formation_time(ps: PointSet, source_point, dest_point, config: NetworkConfig,
                        stream: np.random.Generator, members=None, replication: int = 0) -> DelayRecord:
    """T(x, y) = T(x*, y*) with x*, y* the nodes closest to the two coordinates."""
    if ps.count == 0:
        raise ValueError("Cannot measure path formation time on an empty point set")
    src, _ = closest_node(ps, source_point, mask=members)
    dst, _ = closest_node(ps, dest_point, mask=members)
    distance = float(np.hypot(*(np.asarray(dest_point, dtype=float) - np.asarray(source_point, dtype=float))))
    front = None if src == dst else propagate(ps, src, config, stream, members=members, targets=[dst])
    return _record(ps, front, src, dst, distance, replication)


def measure_delays(ps: PointSet, config: NetworkConfig, stream: np.random.Generator, distances: Sequence[float],
                   members=None, replication: int = 0) -> List[DelayRecord]:
    """
    One propagation from the node nearest the origin, recorded at the nodes
    nearest (x, 0) for every x in distances.
    """
    src, _ = closest_node(ps, (0.0, 0.0), mask=members)
    dsts = [closest_node(ps, (x, 0.0), mask=members)[0] for x in distances]
    targets = sorted({d for d in dsts if d != src})
    front = propagate(ps, src, config, stream, members=members, targets=targets) if targets else None
    return [_record(ps, front, src, dst, float(x), replication) for x, dst in zip(distances, dsts)]
