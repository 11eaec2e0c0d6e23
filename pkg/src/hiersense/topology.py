"""Cell layouts, blockages, line-of-sight tests, and the linear-scale INR matrix.

Geometry is 2-D and static. Cells are either a regular square grid (with
rectangular blockages sitting on the boundaries between adjacent cells) or an
irregular layout where transmitters are dropped uniformly at random and cell
regions are implied by nearest-transmitter assignment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


def db_to_lin(x):
    """Convert dB (power ratio) to linear scale."""
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin_to_db(x):
    """Convert linear power ratio to dB.  Zero maps to -inf."""
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Blockage:
    """Axis-aligned rectangular blockage straddling a cell boundary.

    ``width`` is the extent across the boundary and ``height`` the extent
    along it, both in metres.  ``vertical`` is True when the blockage sits on
    a vertical boundary (i.e. between two horizontally adjacent cells).
    """

    center: tuple[float, float]
    width: float
    height: float
    vertical: bool = True

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("blockage width and height must be positive")

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the rectangle."""
        cx, cy = self.center
        if self.vertical:
            hx, hy = self.width / 2.0, self.height / 2.0
        else:
            hx, hy = self.height / 2.0, self.width / 2.0
        return (cx - hx, cy - hy, cx + hx, cy + hy)


def _segment_hits_rect(p, q, rect) -> bool:
    """True if the segment p->q passes through the rectangle's open interior.

    Liang-Barsky clipping; grazing a face or corner does not count, so a
    blockage lying exactly along a line of cell centers does not obstruct
    links running along that line.
    """
    xmin, ymin, xmax, ymax = rect
    dx, dy = q[0] - p[0], q[1] - p[1]
    t0, t1 = 0.0, 1.0
    for delta, lo, hi, start in ((dx, xmin, xmax, p[0]), (dy, ymin, ymax, p[1])):
        if delta == 0.0:
            if start < lo or start > hi:
                return False
        else:
            ta, tb = (lo - start) / delta, (hi - start) / delta
            if ta > tb:
                ta, tb = tb, ta
            t0, t1 = max(t0, ta), min(t1, tb)
            if t0 > t1:
                return False
    tm = (t0 + t1) / 2.0
    x, y = p[0] + tm * dx, p[1] + tm * dy
    return xmin < x < xmax and ymin < y < ymax


@dataclass(frozen=True)
class PathlossParams:
    """Large-scale pathloss model parameters (defaults: dense sub-6GHz setup)."""

    tx_power_dbm: float = -11.0
    noise_psd_dbm_per_hz: float = -173.0
    bandwidth_hz: float = 20e6
    ref_loss_db: float = 74.0
    ref_distance_m: float = 50.0
    alpha_los: float = 2.1
    alpha_nlos: float = 3.3

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.ref_distance_m <= 0:
            raise ValueError("ref_distance_m must be positive")
        if not (self.alpha_nlos >= self.alpha_los > 0):
            raise ValueError("need alpha_nlos >= alpha_los > 0")

    @property
    def noise_power_dbm(self) -> float:
        return self.noise_psd_dbm_per_hz + 10.0 * math.log10(self.bandwidth_hz)


class NetworkTopology:
    """Immutable cell geometry: centers, blockages, distances and LOS flags."""

    def __init__(self, cell_centers, area, cell_radius, blockages=(), kind="grid",
                 seed=None):
        centers = np.asarray(cell_centers, dtype=float)
        if centers.ndim != 2 or centers.shape[1] != 2 or len(centers) == 0:
            raise ValueError("cell_centers must be a non-empty (N, 2) array")
        w, h = float(area[0]), float(area[1])
        if w <= 0 or h <= 0:
            raise ValueError("area dimensions must be positive")
        if (centers[:, 0] < 0).any() or (centers[:, 0] > w).any() \
                or (centers[:, 1] < 0).any() or (centers[:, 1] > h).any():
            raise ValueError("all cell centers must lie inside the area")

        self.cell_centers = centers
        self.cell_count = len(centers)
        self.area = (w, h)
        self.cell_radius = float(cell_radius)
        self.blockages = list(blockages)
        self.kind = kind
        self.seed = seed

        diff = centers[:, None, :] - centers[None, :, :]
        self.distance_matrix = np.sqrt((diff ** 2).sum(axis=-1))

        rects = [b.bounds() for b in self.blockages]
        los = np.ones((self.cell_count, self.cell_count), dtype=bool)
        for i in range(self.cell_count):
            for j in range(i + 1, self.cell_count):
                for rect in rects:
                    if _segment_hits_rect(centers[i], centers[j], rect):
                        los[i, j] = los[j, i] = False
                        break
        self.los_matrix = los

        # guard against accidental mutation: trials share one topology
        self.cell_centers.setflags(write=False)
        self.distance_matrix.setflags(write=False)
        self.los_matrix.setflags(write=False)

    def is_los(self, i: int, j: int) -> bool:
        """True iff the segment between the centers of i and j is unobstructed."""
        n = self.cell_count
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"cell id out of range: ({i}, {j}) with {n} cells")
        if i == j:
            return True
        return bool(self.los_matrix[i, j])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "area": list(self.area),
            "cell_radius": self.cell_radius,
            "cell_centers": self.cell_centers.tolist(),
            "blockages": [
                {"center": list(b.center), "width": b.width,
                 "height": b.height, "vertical": b.vertical}
                for b in self.blockages
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkTopology":
        blockages = [Blockage(center=tuple(b["center"]), width=b["width"],
                              height=b["height"], vertical=b["vertical"])
                     for b in d["blockages"]]
        return cls(d["cell_centers"], tuple(d["area"]), d["cell_radius"],
                   blockages, kind=d["kind"], seed=d["seed"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path) -> "NetworkTopology":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def is_los(topology: NetworkTopology, i: int, j: int) -> bool:
    return topology.is_los(i, j)


def _grid_boundary_segments(k: int, sx: float, sy: float):
    """All interior boundary segments of a k x k grid.

    Returns (center, vertical) tuples; vertical boundaries separate
    horizontally adjacent cells.
    """
    segments = []
    for row in range(k):
        for col in range(k - 1):
            segments.append((((col + 1) * sx, (row + 0.5) * sy), True))
    for row in range(k - 1):
        for col in range(k):
            segments.append((((col + 0.5) * sx, (row + 1) * sy), False))
    return segments


def build_topology(kind: str, n_cells: int, area, n_blockages: int = 0,
                   rng_seed: int = 0, cell_radius: float | None = None
                   ) -> NetworkTopology:
    """Generate a cell layout.

    ``grid``: n_cells must be a perfect square; centers on a regular lattice,
    blockages (width 1 x height 5 in cell-side units) dropped uniformly on
    distinct interior cell boundaries.

    ``random``: transmitters placed uniformly in the area; the cell of any
    location is the nearest transmitter, so centers double as Voronoi seeds.
    Blockages are tied to grid boundaries and are not supported here.
    """
    w, h = float(area[0]), float(area[1])
    if w <= 0 or h <= 0:
        raise ValueError("area dimensions must be positive")
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    rng = np.random.default_rng(rng_seed)

    if kind == "grid":
        k = math.isqrt(n_cells)
        if k * k != n_cells:
            raise ValueError(f"grid topology needs a square cell count, got {n_cells}")
        sx, sy = w / k, h / k
        cols, rows = np.meshgrid(np.arange(k), np.arange(k))
        centers = np.column_stack([(cols.ravel() + 0.5) * sx,
                                   (rows.ravel() + 0.5) * sy])
        blockages = []
        if n_blockages > 0:
            segments = _grid_boundary_segments(k, sx, sy)
            if n_blockages > len(segments):
                raise ValueError("more blockages requested than boundary segments")
            picks = rng.choice(len(segments), size=n_blockages, replace=False)
            for idx in sorted(picks):
                center, vertical = segments[idx]
                across = sx if vertical else sy
                along = sy if vertical else sx
                blockages.append(Blockage(center=center, width=1.0 * across,
                                          height=5.0 * along, vertical=vertical))
        radius = cell_radius if cell_radius is not None else min(sx, sy) / 2.0
        return NetworkTopology(centers, (w, h), radius, blockages,
                               kind="grid", seed=rng_seed)

    if kind == "random":
        if n_blockages > 0:
            raise ValueError("blockages are defined on grid boundaries only")
        centers = np.column_stack([rng.uniform(0, w, n_cells),
                                   rng.uniform(0, h, n_cells)])
        radius = cell_radius if cell_radius is not None else \
            0.5 * math.sqrt(w * h / n_cells)
        return NetworkTopology(centers, (w, h), radius, (),
                               kind="random", seed=rng_seed)

    raise ValueError(f"unknown topology kind: {kind!r}")


@dataclass(frozen=True)
class InterferenceMatrix:
    """Symmetric linear-scale INR matrix phi[i, j] (transmitter i, receiver j)."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        object.__setattr__(self, "phi", phi)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
            raise ValueError("phi must be square")
        if not (phi == phi.T).all():
            raise ValueError("phi must be symmetric (channel reciprocity)")
        if (phi < 0).any():
            raise ValueError("phi entries must be nonnegative")
        if (np.diag(phi) <= 0).any():
            raise ValueError("diagonal SNR entries must be positive")
        phi.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return self.phi.shape[0]

    def coupling(self) -> np.ndarray:
        """W[j, i] = phi[j, i] / phi[i, i]: interference weight of cell j at cell i."""
        return self.phi / np.diag(self.phi)[None, :]


def _phi_array(phi) -> np.ndarray:
    return phi.phi if isinstance(phi, InterferenceMatrix) else np.asarray(phi, dtype=float)


def pathloss_db(params: PathlossParams, distance_m, los) -> np.ndarray:
    """INR in dB for given distances and LOS flags.

    Distance-dependent term uses the LOS/NLOS exponent relative to the
    reference distance; distances are taken as-is (callers clamp if needed).
    """
    d = np.asarray(distance_m, dtype=float)
    alpha = np.where(np.asarray(los, dtype=bool), params.alpha_los, params.alpha_nlos)
    return (params.tx_power_dbm - params.noise_power_dbm - params.ref_loss_db
            - alpha * 10.0 * np.log10(d / params.ref_distance_m))


def compute_phi(topology: NetworkTopology, params: PathlossParams) -> InterferenceMatrix:
    """Build the INR matrix from the pathloss model.

    The diagonal (own-cell SNR) is evaluated at the reference distance, since
    the pathloss law is undefined at zero distance.
    """
    d = topology.distance_matrix.copy()
    np.fill_diagonal(d, params.ref_distance_m)
    phi_db = pathloss_db(params, d, topology.los_matrix)
    return InterferenceMatrix(db_to_lin(phi_db))
