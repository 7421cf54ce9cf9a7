"""One-sided Hausdorff-type estimates for sets and lattice measures.

Covers are dyadic: level k uses half-open cells [i 2^-k, (i+1) 2^-k) x
[j 2^-k, (j+1) 2^-k).  Cover sums use the Euclidean diameter of the bounding
box of each cell's piece of the set, which can only overestimate the
diameter, so every pre-measure value here is an upper bound.  Measure
densities use closed l-inf balls; the two norms differ by a factor sqrt(2)
in radius, which changes constants only.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from clqg.chaos import AtomicMeasure, SizeBiasedDraw
from clqg.errors import EmptyGrid
from clqg.gauge import GaugeTriple, PowerGauge

MAX_LEVEL = 12  # 4^12 cells is the largest raster we build
CELL_BUDGET = 1 << 18


# -- sets -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] == 0:
            raise ValueError("point cloud needs a nonempty (M, 2) array")
        object.__setattr__(self, "points", p)


@dataclass(frozen=True, eq=False)
class BoxUnion:
    """Union of closed boxes given as rows (x0, y0, x1, y1); degenerate boxes allowed."""

    boxes: np.ndarray

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.boxes, dtype=float))
        if b.shape[1] != 4 or b.shape[0] == 0 or np.any(b[:, 2] < b[:, 0]) or np.any(b[:, 3] < b[:, 1]):
            raise ValueError("boxes must be rows x0 <= x1, y0 <= y1")
        object.__setattr__(self, "boxes", b)


PlanarSet = Union[PointCloud, BoxUnion]


def segment() -> BoxUnion:
    return BoxUnion([[0.0, 0.0, 1.0, 0.0]])


def unit_square() -> BoxUnion:
    return BoxUnion([[0.0, 0.0, 1.0, 1.0]])


def cantor_dust(depth: int) -> BoxUnion:
    """Product of two middle-thirds Cantor sets after ``depth`` removals."""
    lefts = np.zeros(1)
    for d in range(depth):
        s = 3.0 ** -(d + 1)
        lefts = np.concatenate([lefts, lefts + 2 * s])
    side = 3.0 ** -depth
    x, y = np.meshgrid(lefts, lefts, indexing="ij")
    x, y = x.ravel(), y.ravel()
    return BoxUnion(np.column_stack([x, y, x + side, y + side]))


def _lo_hi_index(a: np.ndarray, b: np.ndarray, scale: float):
    lo = np.floor(a * scale).astype(np.int64)
    bs = b * scale
    hi = np.floor(bs).astype(np.int64)
    # a closed right end sitting on a cell edge does not open a new cell
    on_edge = (bs == np.floor(bs)) & (b > a)
    return lo, hi - on_edge.astype(np.int64)


@functools.lru_cache(maxsize=32)
def _cells(s: PlanarSet, k: int):
    """Occupied level-k cells as (keys (C, 2), boxes (C, 4)), where each box row
    is the bounding box (x0, y0, x1, y1) of the set's piece inside that cell."""
    scale = 2.0 ** k
    if isinstance(s, PointCloud):
        keys = np.floor(s.points * scale).astype(np.int64)
        pieces = np.column_stack([s.points, s.points])
    else:
        bx = s.boxes
        i0, i1 = _lo_hi_index(bx[:, 0], bx[:, 2], scale)
        j0, j1 = _lo_hi_index(bx[:, 1], bx[:, 3], scale)
        inv = 1.0 / scale
        key_parts, piece_parts = [], []
        for n in range(bx.shape[0]):
            I, J = np.meshgrid(np.arange(i0[n], i1[n] + 1), np.arange(j0[n], j1[n] + 1), indexing="ij")
            I, J = I.ravel(), J.ravel()
            key_parts.append(np.column_stack([I, J]))
            piece_parts.append(np.column_stack([
                np.maximum(bx[n, 0], I * inv), np.maximum(bx[n, 1], J * inv),
                np.minimum(bx[n, 2], (I + 1) * inv), np.minimum(bx[n, 3], (J + 1) * inv)]))
        keys, pieces = np.concatenate(key_parts), np.concatenate(piece_parts)
        if bx.shape[0] == 1:
            return keys, pieces
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    lo = np.full((len(uniq), 2), np.inf)
    hi = np.full((len(uniq), 2), -np.inf)
    np.minimum.at(lo, inverse, pieces[:, :2])
    np.maximum.at(hi, inverse, pieces[:, 2:])
    return uniq, np.column_stack([lo, hi])


@functools.lru_cache(maxsize=256)
def cover_count(s: PlanarSet, k: int) -> int:
    """Number of level-k dyadic cells meeting the set."""
    if isinstance(s, PointCloud):
        return int(np.unique(np.floor(s.points * 2.0 ** k).astype(np.int64), axis=0).shape[0])
    scale = 2.0 ** k
    i0, i1 = _lo_hi_index(s.boxes[:, 0], s.boxes[:, 2], scale)
    j0, j1 = _lo_hi_index(s.boxes[:, 1], s.boxes[:, 3], scale)
    oi, oj = int(i0.min()), int(j0.min())
    grid = np.zeros((int(i1.max()) - oi + 1, int(j1.max()) - oj + 1), dtype=bool)
    for a, b, c, d in zip(i0 - oi, i1 - oi, j0 - oj, j1 - oj):
        grid[a:b + 1, c:d + 1] = True
    return int(grid.sum())


# -- gauges -----------------------------------------------------------------------


GaugeLike = Union[GaugeTriple, PowerGauge, Callable]


@dataclass(frozen=True)
class ScaledGauge:
    """lam * phi for a base gauge."""

    base: object
    lam: float

    def phi(self, r):
        return self.lam * _phi(self.base, r)


def _phi(gauge, r) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if isinstance(gauge, GaugeTriple):
        return np.array([0.0 if x <= 0 else gauge.phi(float(x)) for x in r])
    if hasattr(gauge, "phi"):
        return np.asarray(gauge.phi(r), dtype=float)
    return np.asarray(gauge(r), dtype=float)


# -- pre-measure and dimension ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoverEstimate:
    gauge: object
    mesh: float
    value: float
    level: int
    cover: list = field(repr=False)  # (x corner, y corner, side)
    upper_bound: bool = True


def level_for_mesh(mesh: float) -> int:
    """Coarsest dyadic level whose cells have diameter sqrt(2) 2^-k <= mesh."""
    if not mesh > 0:
        raise ValueError("mesh must be positive")
    return max(0, math.ceil(math.log2(math.sqrt(2.0) / mesh) - 1e-12))


def _budget_level(s: PlanarSet) -> int:
    """Finest level <= MAX_LEVEL whose cover stays within CELL_BUDGET cells."""
    k = 0
    while k < MAX_LEVEL and cover_count(s, k + 1) <= CELL_BUDGET:
        k += 1
    return k


def premeasure_upper(s: PlanarSet, gauge: GaugeLike, mesh: float) -> CoverEstimate:
    """Upper bound on the mesh-pre-measure from dyadic covers.

    Every level at least as fine as the mesh gives an admissible cover.  The
    cheapest one is kept, scanning down to a finest level that depends on the
    set alone, so the estimate is nondecreasing as the mesh shrinks.
    """
    k0 = level_for_mesh(mesh)
    best = None
    for k in range(k0, max(k0, _budget_level(s)) + 1):
        cells, bb = _cells(s, k)
        diam = np.hypot(bb[:, 2] - bb[:, 0], bb[:, 3] - bb[:, 1])
        val = float(np.sum(_phi(gauge, diam)))
        if best is None or val < best[0]:
            best = (val, k, cells)
    val, k, cells = best
    side = 2.0 ** -k
    cover = [(int(i) * side, int(j) * side, side) for i, j in cells]
    return CoverEstimate(gauge, float(mesh), val, k, cover)


def export_cover_csv(est: CoverEstimate, path) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,side\n")
        for x, y, side in est.cover:
            fh.write(f"{x!r},{y!r},{side!r}\n")


def dim_estimate(s: PlanarSet, levels: Sequence[int] = range(4, 13)) -> float:
    """Box-counting slope of log N_k against k log 2.

    The default window skips the coarsest levels, where a handful of cells
    straddling the set's edges dominate the count.

    This bounds the Hausdorff dimension from above in general and agrees with
    it on self-similar sets.
    """
    ks = np.asarray(list(levels), dtype=float)
    if ks.size < 2:
        raise ValueError("need at least two levels")
    counts = np.array([cover_count(s, int(k)) for k in ks], dtype=float)
    return float(np.polyfit(ks * math.log(2.0), np.log(counts), 1)[0])


# -- density classification ---------------------------------------------------------


class DensityClass(str, enum.Enum):
    MEASURE_INFINITE = "MeasureInfinite"
    MEASURE_ZERO_ON_CARRIER = "MeasureZeroOnCarrier"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True, eq=False)
class DensityReport:
    points: np.ndarray
    ratios: np.ndarray
    classification: DensityClass
    t_low: float
    t_high: float
    quorum: float
    radii: np.ndarray = field(repr=False, default=None)

    def to_record(self) -> dict:
        return {"classification": self.classification.value, "t_low": self.t_low, "t_high": self.t_high,
                "quorum": self.quorum, "radii": [float(r) for r in self.radii],
                "ratios": [float(r) for r in self.ratios]}


def _scaled_points(points, N: int) -> np.ndarray:
    if len(points) and isinstance(points[0], SizeBiasedDraw):
        return np.array([p.scaled(N) for p in points])
    return np.atleast_2d(np.asarray(points, dtype=float))


def _check_radii(radii) -> np.ndarray:
    r = np.asarray(radii, dtype=float)
    if r.size == 0:
        raise EmptyGrid("radii grid is empty")
    if np.any(r <= 0) or np.any(r >= 1):
        raise ValueError("radii must lie in (0, 1)")
    return r


def density_ratios(measure: AtomicMeasure, pts: np.ndarray, gauge: GaugeLike, radii) -> np.ndarray:
    """(points, radii) table of mu(B(x, r)) / phi(r)."""
    r = _check_radii(radii)
    ph = _phi(gauge, r)
    return np.column_stack([measure.ball_masses(pts, float(ri)) / p for ri, p in zip(r, ph)])


def rogers_taylor_classify(measure: AtomicMeasure, points, gauge: GaugeLike, radii,
                           t_low: float, t_high: float, quorum: float = 0.9) -> DensityReport:
    """Classify by the per-point maximum of mu(B(x, r)) / phi(r) over the radii.

    At least ``quorum`` of the points above ``t_high`` reads as an infinite
    phi-measure of the carrier; at least ``quorum`` below ``t_low`` reads as a
    carrier of zero phi-measure.  Anything else is indeterminate.
    """
    if not t_low < t_high:
        raise ValueError("need t_low < t_high")
    if len(points) == 0:
        raise EmptyGrid("no points to classify")
    pts = _scaled_points(points, measure.domain.N)
    ratios = density_ratios(measure, pts, gauge, radii).max(axis=1)
    if np.mean(ratios > t_high) >= quorum:
        cls = DensityClass.MEASURE_INFINITE
    elif np.mean(ratios < t_low) >= quorum:
        cls = DensityClass.MEASURE_ZERO_ON_CARRIER
    else:
        cls = DensityClass.INDETERMINATE
    return DensityReport(pts, ratios, cls, float(t_low), float(t_high), float(quorum), _check_radii(radii))


@dataclass(frozen=True, eq=False)
class CarrierSet:
    sites: np.ndarray
    mass_fraction: float
    complement_fraction: float
    threshold: float


def carrier_extract(measure: AtomicMeasure, gauge: GaugeLike, t: float, radii) -> CarrierSet:
    """Sites whose ratio at the finest radius exceeds t, with their mass share."""
    r = float(np.min(_check_radii(radii)))
    ph = float(_phi(gauge, r)[0])
    dom = measure.domain
    ratio = measure.ball_masses(dom.sites / dom.N, r) / ph
    keep = ratio > t
    w = measure.weights
    total = float(w.sum())
    kept = float(w[keep].sum())
    return CarrierSet(dom.sites[keep], kept / total, float(w[~keep].sum()) / total, float(t))
