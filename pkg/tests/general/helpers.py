"""
Brute-force oracles for the grid-accelerated code paths.

Everything here scans all points or all paths directly and is only meant for
the small instances the tests build.
"""

import logging
import math
from collections import deque

import numpy as np
from tabulate import tabulate

from aloha_connectivity.protocol_model import sample_slot

LOGGER = logging.getLogger(__name__)


def brute_range(ps, center, radius):
    """Indices of all points strictly closer than radius to center."""
    if ps.count == 0:
        return np.empty(0, dtype=np.intp)
    dist = ps.distance_to(center, np.arange(ps.count))
    return np.flatnonzero(dist < radius)


def brute_closest(ps, coordinate, mask=None, exclude=None):
    """(node, distance) of the closest eligible node, smallest index on ties."""
    dist = ps.distance_to(coordinate, np.arange(ps.count)).astype(float)
    if mask is not None:
        dist[~np.asarray(mask, dtype=bool)] = np.inf
    if exclude is not None:
        dist[exclude] = np.inf
    best = int(np.argmin(dist))
    return best, float(dist[best])


def brute_links(ps, is_transmitter, beta, eta):
    """
    Sorted list of (tx, rx) pairs meeting the protocol model, checked pair
    by pair against every other transmitter.
    """
    tx_ids = np.flatnonzero(is_transmitter)
    edges = []
    for x in tx_ids:
        for y in np.flatnonzero(~is_transmitter):
            d = float(ps.distance_between(x, y))
            if not d < eta:
                continue
            others = tx_ids[tx_ids != x]
            if others.size and np.any(ps.distance_between(others, np.full(others.size, y)) < beta * d):
                continue
            edges.append((int(x), int(y)))
    return sorted(edges)


def bfs_labels(ps, eta):
    """Flood-fill component labels of the eta-disc graph, numbered by smallest member."""
    labels = np.full(ps.count, -1)
    current = 0
    for start in range(ps.count):
        if labels[start] >= 0:
            continue
        labels[start] = current
        queue = deque([start])
        while queue:
            u = queue.popleft()
            near = np.flatnonzero(ps.distance_between(np.full(ps.count, u), np.arange(ps.count)) < eta)
            for v in near:
                if labels[v] < 0:
                    labels[v] = current
                    queue.append(v)
        current += 1
    return labels


def materialize_multigraph(ps, p, beta, eta, stream, slots):
    """
    Snapshot edge lists of slots 1..slots drawn from stream in the same
    order propagation draws them (one transmitter flag per node per slot).

    Returns
    -------
    (edges, roles): a list of (tx, rx) lists and a list of transmitter masks, both indexed by slot - 1
    """
    edges, roles = [], []
    for k in range(1, slots + 1):
        slot = sample_slot(ps, p, stream, slot=k)
        roles.append(slot.is_transmitter)
        edges.append(brute_links(ps, slot.is_transmitter, beta, eta))
    return edges, roles


def causal_search(count, source, edges):
    """
    Earliest arrival and fewest hops among earliest paths, searched over the
    time-expanded states (node, slot) of the multigraph.

    Returns
    -------
    (arrival, hops): float arrays, inf where the node is never reached
    """
    out_edges = {}
    for k, slot_edges in enumerate(edges, start=1):
        for tx, rx in slot_edges:
            out_edges.setdefault(tx, []).append((k, rx))

    # fewest hops seen on entering (node, slot), a path is only extended when it improves this
    seen = {(source, 0): 0}
    stack = [(source, 0, 0)]
    while stack:
        node, t, h = stack.pop()
        for k, rx in out_edges.get(node, []):
            if k <= t or seen.get((rx, k), math.inf) <= h + 1:
                continue
            seen[(rx, k)] = h + 1
            stack.append((rx, k, h + 1))

    arrival = np.full(count, np.inf)
    hops = np.full(count, np.inf)
    for (node, k), h in seen.items():
        if k < arrival[node] or (k == arrival[node] and h < hops[node]):
            arrival[node], hops[node] = k, h
    return arrival, hops


def mismatch_table(expected, observed, names=("expected", "observed")):
    """Tabulated rows where two arrays differ, for assertion messages."""
    expected, observed = np.asarray(expected), np.asarray(observed)
    rows = [(i, expected[i], observed[i]) for i in np.flatnonzero(expected != observed)]
    table = tabulate(rows, headers=["index", *names])
    if rows:
        LOGGER.debug(f"Mismatches:\n{table}")
    return table
