"""
Connected components of the eta-disc graph on a point set, and its giant
component Psi_eta (the node set on which the time constant is finite).
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from aloha_connectivity.analytics import percolation_threshold
from aloha_connectivity.pointprocess import PointSet, neighbor_pairs

LOGGER = logging.getLogger(__name__)


class UnionFind:
    """Disjoint sets over 0..size-1 with path compression and union by size."""

    def __init__(self, size):
        self.parents = list(range(size))
        self.sizes = [1] * size
        self.num_components = size

    def find(self, elem):
        root = elem
        while root != self.parents[root]:
            root = self.parents[root]
        # compress the path taken
        while elem != root:
            self.parents[elem], elem = root, self.parents[elem]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.sizes[ra] < self.sizes[rb]:
            ra, rb = rb, ra
        self.parents[rb] = ra
        self.sizes[ra] += self.sizes[rb]
        self.num_components -= 1

    def labels(self) -> np.ndarray:
        """Component label per element, components numbered by their smallest member."""
        roots = np.array([self.find(i) for i in range(len(self.parents))], dtype=np.int64)
        if roots.size == 0:
            return roots
        _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
        rank = np.argsort(np.argsort(first))
        return rank[inverse]


def disc_components(ps: PointSet, eta: float) -> np.ndarray:
    """Label per node, equal labels iff joined by a chain of hops shorter than eta."""
    if not (eta > 0 and math.isfinite(eta)):
        raise ValueError(f"eta must be finite and greater than 0, got {eta}")
    i, j, _ = neighbor_pairs(ps, eta)
    forward = i < j
    uf = UnionFind(ps.count)
    for a, b in zip(i[forward].tolist(), j[forward].tolist()):
        uf.union(a, b)
    LOGGER.debug(f"Disc graph eta={eta:g}: {int(forward.sum())} links, {uf.num_components} components")
    return uf.labels()


@dataclass(frozen=True, eq=False)
class GiantComponent:
    """Largest component of the eta-disc graph in the window."""

    members: np.ndarray
    size: int
    fraction: float
    threshold_ok: bool
    n_components: int
    eta: float
    lam: float


def giant_component(ps: PointSet, eta: float, lam: Optional[float] = None) -> GiantComponent:
    """
    Psi_eta for this point set.

    lam defaults to the empirical density of ps. threshold_ok compares eta
    with the asymptotic percolation threshold, a finite window only shows
    the transition approximately.
    """
    if lam is None:
        lam = ps.count / (2.0 * ps.window_half) ** 2
    labels = disc_components(ps, eta)
    if labels.size == 0:
        return GiantComponent(np.zeros(0, dtype=bool), 0, 0.0, False, 0, eta, lam)
    sizes = np.bincount(labels)
    giant = int(np.argmax(sizes))
    threshold_ok = lam > 0 and eta > percolation_threshold(lam)
    if not threshold_ok:
        LOGGER.warning(f"eta={eta:g} is below the percolation threshold for lambda={lam:g}")
    return GiantComponent(
        members=labels == giant,
        size=int(sizes[giant]),
        fraction=float(sizes[giant] / ps.count),
        threshold_ok=bool(threshold_ok),
        n_components=int(sizes.size),
        eta=eta,
        lam=lam,
    )


def component_summary(ps: PointSet, eta: float, lam: Optional[float] = None) -> dict:
    giant = giant_component(ps, eta, lam)
    return {
        "eta": giant.eta,
        "lambda": giant.lam,
        "threshold_ok": giant.threshold_ok,
        "giant_fraction": giant.fraction,
        "n_components": giant.n_components,
    }
