"""
Poisson point processes on the square window [-L, L]^2 and the spatial queries
the protocol model needs (range, nearest neighbour, all pairs within a radius).

Queries go through a uniform bucket grid. The grid is exact: every query
returns what a brute-force scan over all points would return.
"""

import enum
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

LOGGER = logging.getLogger(__name__)

# window_half must be at least EDGE_GUARD * eta in window mode
EDGE_GUARD = 5.0

MAX_SEED = 2 ** 64


class Boundary(str, enum.Enum):
    """Distance convention on the window."""

    WINDOW = "window"
    TORUS = "torus"


def check_network_field(name: str, value):
    """
    Validate and normalize a single NetworkConfig field.

    Returns the normalized value, raises ValueError naming the field otherwise.
    """
    if name in ("lam", "beta", "window_half"):
        value = float(value)
        if not math.isfinite(value) or value <= 0:
            raise ValueError(f"{_label(name)} must be a finite number greater than 0, got {value}")
    elif name == "p":
        value = float(value)
        if not 0 < value < 1:
            raise ValueError(f"p must lie in (0, 1), got {value}")
    elif name == "eta":
        value = float(value)
        if math.isnan(value) or value <= 0:
            raise ValueError(f"eta must be greater than 0 (or inf), got {value}")
    elif name == "boundary":
        try:
            value = Boundary(value)
        except ValueError:
            options = ", ".join(b.value for b in Boundary)
            raise ValueError(f"boundary must be one of {options}, got {value!r}") from None
    elif name == "seed":
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"seed must be an integer, got {value}")
        value = int(value)
        if not 0 <= value < MAX_SEED:
            raise ValueError(f"seed must lie in [0, 2^64), got {value}")
    elif name == "max_slots":
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"max_slots must be an integer, got {value}")
        value = int(value)
        if value < 1:
            raise ValueError(f"max_slots must be at least 1, got {value}")
    else:
        raise ValueError(f"Unknown network parameter {name!r}")
    return value


def _label(name):
    return "lambda" if name == "lam" else name


@dataclass(frozen=True)
class NetworkConfig:
    """
    All model parameters of one network.

    Parameters
    ----------
    lam: float
        Node density (nodes per unit area)
    p: float
        ALOHA transmit probability
    beta: float
        Interference guard factor, the guard disk around a receiver at
        distance d from its transmitter has radius beta * d
    eta: float
        Maximum link distance, ``math.inf`` for the interference-limited regime
    window_half: float
        Half side L of the window [-L, L]^2
    boundary: Boundary
        ``window`` (plain Euclidean) or ``torus`` (wraparound distance)
    seed: int
        Master seed of every random stream derived for this network
    max_slots: int
        Propagation / connection horizon in slots
    """

    lam: float
    p: float
    beta: float
    eta: float
    window_half: float = 50.0
    boundary: Boundary = Boundary.WINDOW
    seed: int = 0
    max_slots: int = 2000

    def __post_init__(self):
        for name in ("lam", "p", "beta", "eta", "window_half", "boundary", "seed", "max_slots"):
            object.__setattr__(self, name, check_network_field(name, getattr(self, name)))
        if self.boundary is Boundary.WINDOW and self.window_half < EDGE_GUARD * self.eta:
            raise ValueError(
                f"window_half must be at least {EDGE_GUARD:g} * eta in window mode, "
                f"got window_half={self.window_half} and eta={self.eta}"
            )

    @property
    def interference_limited(self) -> bool:
        return math.isinf(self.eta)

    @property
    def cell_size(self) -> float:
        return cell_size_for(self.lam, self.eta, self.window_half)

    def with_(self, **changes) -> "NetworkConfig":
        """Copy of this config with some fields replaced (and revalidated)."""
        return replace(self, **changes)


def cell_size_for(lam: float, eta: float, window_half: float) -> float:
    """Grid cell size max(eta, 1/sqrt(lam)) clamped to the window side."""
    size = 1.0 / math.sqrt(lam)
    if math.isfinite(eta):
        size = max(size, eta)
    return min(size, 2.0 * window_half)


def replication_stream(seed: int, *keys: int) -> np.random.Generator:
    """
    Independent random stream for (master seed, key, key, ...).

    The keys go into the spawn key of a numpy SeedSequence, whose hashing is
    specified independently of platform and numpy build.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


@dataclass(frozen=True, eq=False)
class UniformGrid:
    """Bucket index over a square window, buckets stored in CSR form."""

    window_half: float
    n_side: int
    width: float
    order: np.ndarray
    starts: np.ndarray

    @classmethod
    def build(cls, positions: np.ndarray, window_half: float, cell_size: float) -> "UniformGrid":
        n_side = max(1, int(math.floor(2.0 * window_half / cell_size)))
        width = 2.0 * window_half / n_side
        grid = cls(window_half, n_side, width, np.empty(0, dtype=np.intp), np.zeros(1, dtype=np.intp))
        cx, cy = grid.cell_coords(positions)
        cell = cx * n_side + cy
        order = np.argsort(cell, kind="stable")
        starts = np.searchsorted(cell[order], np.arange(n_side * n_side + 1))
        return cls(window_half, n_side, width, order, starts)

    def cell_coords(self, xy: np.ndarray):
        ij = np.floor((np.asarray(xy, dtype=float) + self.window_half) / self.width).astype(np.intp)
        ij = np.clip(ij, 0, self.n_side - 1)
        return ij[..., 0], ij[..., 1]

    def candidates(self, centers: np.ndarray, radius: float, boundary: Boundary):
        """
        Candidate (center row, point index) pairs for points possibly closer
        than ``radius`` to each center. A superset of the true answer.
        """
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        n_points = self.order.size
        reach = math.ceil(radius / self.width) if math.isfinite(radius) else self.n_side
        if 2 * reach + 1 >= self.n_side:
            rows = np.repeat(np.arange(len(centers)), n_points)
            return rows, np.tile(np.arange(n_points), len(centers))

        offsets = np.arange(-reach, reach + 1)
        ox, oy = np.meshgrid(offsets, offsets, indexing="ij")
        cx, cy = self.cell_coords(centers)
        nx = cx[:, None] + ox.ravel()[None, :]
        ny = cy[:, None] + oy.ravel()[None, :]
        if boundary is Boundary.TORUS:
            nx %= self.n_side
            ny %= self.n_side
            valid = np.ones(nx.shape, dtype=bool)
        else:
            valid = (nx >= 0) & (nx < self.n_side) & (ny >= 0) & (ny < self.n_side)
        rows = np.broadcast_to(np.arange(len(centers))[:, None], nx.shape)[valid]
        cells = (nx * self.n_side + ny)[valid]

        lo = self.starts[cells]
        counts = self.starts[cells + 1] - lo
        total = int(counts.sum())
        first = np.repeat(lo - (np.cumsum(counts) - counts), counts)
        return np.repeat(rows, counts), self.order[first + np.arange(total)]


@dataclass(frozen=True, eq=False)
class PointSet:
    """Node positions plus their grid index. Immutable after construction."""

    positions: np.ndarray
    window_half: float
    boundary: Boundary
    grid: UniformGrid

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def metric(self) -> Boundary:
        return self.boundary

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        delta = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.boundary is Boundary.TORUS:
            period = 2.0 * self.window_half
            delta = delta - period * np.round(delta / period)
        return delta

    def distance_to(self, center, indices) -> np.ndarray:
        """Distances from an arbitrary coordinate to the given nodes."""
        delta = self.displacement(self.positions[indices], np.asarray(center, dtype=float))
        return np.hypot(delta[..., 0], delta[..., 1])

    def distance_between(self, i, j) -> np.ndarray:
        delta = self.displacement(self.positions[i], self.positions[j])
        return np.hypot(delta[..., 0], delta[..., 1])

    def wrap(self, center) -> np.ndarray:
        center = np.asarray(center, dtype=float)
        if self.boundary is Boundary.TORUS:
            period = 2.0 * self.window_half
            center = (center + self.window_half) % period - self.window_half
        return center


def point_set_from_positions(positions, window_half: float, boundary=Boundary.WINDOW, cell_size=None) -> PointSet:
    """Build a PointSet from explicit coordinates inside [-L, L]^2."""
    window_half = check_network_field("window_half", window_half)
    boundary = check_network_field("boundary", boundary)
    positions = np.array(positions, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(positions)) or np.any(np.abs(positions) > window_half):
        raise ValueError(f"All positions must lie in [-{window_half}, {window_half}]^2")
    if cell_size is None:
        density = max(len(positions), 1) / (2.0 * window_half) ** 2
        cell_size = 1.0 / math.sqrt(density)
    cell_size = min(float(cell_size), 2.0 * window_half)
    positions.setflags(write=False)
    grid = UniformGrid.build(positions, window_half, cell_size)
    return PointSet(positions, window_half, boundary, grid)


def sample_ppp(config: NetworkConfig, stream: np.random.Generator) -> PointSet:
    """
    Sample a homogeneous PPP of intensity config.lam on [-L, L]^2.

    The stream is consumed in a fixed order: one Poisson count, then
    2 * count uniforms (x0, y0, x1, y1, ...).
    """
    side = 2.0 * config.window_half
    mean = config.lam * side * side
    if not math.isfinite(mean) or mean <= 0:
        raise ValueError(f"Mean point count must be finite and positive, got {mean}")
    count = int(stream.poisson(mean))
    positions = stream.uniform(-config.window_half, config.window_half, size=(count, 2))
    LOGGER.debug(f"Sampled {count} points (mean {mean:g}) on [-{config.window_half:g}, {config.window_half:g}]^2")
    return point_set_from_positions(positions, config.window_half, config.boundary, config.cell_size)


def range_query(ps: PointSet, center, radius: float) -> np.ndarray:
    """Indices (ascending) of the points strictly closer than radius to center."""
    if radius < 0:
        raise ValueError(f"radius must be at least 0, got {radius}")
    if radius == 0 or ps.count == 0:
        return np.empty(0, dtype=np.intp)
    center = ps.wrap(center)
    _, idx = ps.grid.candidates(center, radius, ps.boundary)
    hits = idx[ps.distance_to(center, idx) < radius]
    return np.sort(hits)


def neighbor_pairs(ps: PointSet, radius: float, query=None):
    """
    All pairs (i, j), i in query and j != i, with distance(i, j) < radius.

    Returns three aligned arrays: i, j and the distance.
    """
    query = np.arange(ps.count) if query is None else np.asarray(query, dtype=np.intp)
    if radius <= 0 or query.size == 0 or ps.count == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty.copy(), np.empty(0)
    rows, idx = ps.grid.candidates(ps.positions[query], radius, ps.boundary)
    src = query[rows]
    keep = idx != src
    src, idx = src[keep], idx[keep]
    dist = ps.distance_between(src, idx)
    inside = dist < radius
    return src[inside], idx[inside], dist[inside]


def closest_node(ps: PointSet, coordinate, mask=None, exclude=None):
    """
    Node closest to an arbitrary coordinate, smallest index on ties.

    Parameters
    ----------
    mask: np.ndarray, optional
        Boolean array, only nodes flagged True are eligible
    exclude: int, optional
        A node that is never returned (the query point itself)

    Returns
    -------
    (node id, distance)
    """
    eligible = np.ones(ps.count, dtype=bool) if mask is None else np.array(mask, dtype=bool)
    if exclude is not None:
        eligible[exclude] = False
    if not eligible.any():
        raise ValueError("No eligible node to search")
    center = ps.wrap(coordinate)
    # every point lies within this distance of center
    covering = float(np.hypot(*np.abs(center))) + math.sqrt(2.0) * ps.window_half + ps.grid.width
    radius = ps.grid.width
    while True:
        hits = range_query(ps, center, radius)
        hits = hits[eligible[hits]]
        if hits.size:
            dist = ps.distance_to(center, hits)
            best = int(np.argmin(dist))
            return int(hits[best]), float(dist[best])
        if radius > covering:
            raise RuntimeError("Grid search failed to cover the window")
        radius *= 2.0


def nearest_neighbor(ps: PointSet, origin_index: int):
    """Nearest other node of origin_index as (node id, distance)."""
    if ps.count < 2:
        raise ValueError(f"Nearest neighbour needs at least 2 points, got {ps.count}")
    return closest_node(ps, ps.positions[origin_index], exclude=origin_index)


def with_probe(ps: PointSet, coordinate=(0.0, 0.0)):
    """Copy of ps with an extra node at coordinate; returns (point set, probe id)."""
    positions = np.vstack([ps.positions, np.asarray(coordinate, dtype=float).reshape(1, 2)])
    probed = point_set_from_positions(positions, ps.window_half, ps.boundary, ps.grid.width)
    return probed, ps.count


def interior_mask(ps: PointSet, margin: float) -> np.ndarray:
    """Nodes at least margin from the window edge (every node on a torus)."""
    if ps.boundary is Boundary.TORUS:
        return np.ones(ps.count, dtype=bool)
    return np.all(np.abs(ps.positions) <= ps.window_half - margin, axis=1)


def write_points_csv(ps: PointSet, path) -> None:
    frame = pd.DataFrame({"index": np.arange(ps.count), "x": ps.positions[:, 0], "y": ps.positions[:, 1]})
    frame.to_csv(path, index=False)
    LOGGER.info(f"Wrote {ps.count} points to {path}")
