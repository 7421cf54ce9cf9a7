"""Lattice discretisation of planar domains and the concentric annulus frame.

Site sets are stored as boolean masks over an integer bounding window;
``mask[i, j]`` refers to the lattice point ``(origin[0] + i, origin[1] + j)``.
All lattice distances are l-infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from clqg.errors import EmptyDomain, RootTooClose


@dataclass(frozen=True)
class Rectangle:
    """Open rectangle (x0, x0 + w) x (y0, y0 + h)."""

    x0: float
    y0: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError("rectangle needs positive width and height")

    @property
    def boxes(self) -> tuple:
        return (self,)

    def bounds(self) -> tuple:
        return self.x0, self.y0, self.x0 + self.w, self.y0 + self.h


@dataclass(frozen=True)
class PolyominoUnion:
    """Interior of a finite union of closed axis-parallel boxes."""

    boxes: tuple

    def __post_init__(self):
        if not self.boxes:
            raise ValueError("empty box union")
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def bounds(self) -> tuple:
        b = np.array([r.bounds() for r in self.boxes])
        return b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max()


Shape = Union[Rectangle, PolyominoUnion]


def _complement_cells(shape: Shape, scale: float):
    """Closed rectangles (scaled by ``scale``) whose union, together with the
    exterior of the bounding box, is the complement of the shape."""
    boxes = [tuple(v * scale for v in r.bounds()) for r in shape.boxes]
    if len(boxes) == 1:
        return boxes[0], []
    xs = sorted({b[0] for b in boxes} | {b[2] for b in boxes})
    ys = sorted({b[1] for b in boxes} | {b[3] for b in boxes})
    out = []
    for xa, xb in zip(xs[:-1], xs[1:]):
        for ya, yb in zip(ys[:-1], ys[1:]):
            cx, cy = 0.5 * (xa + xb), 0.5 * (ya + yb)
            if not any(b[0] < cx < b[2] and b[1] < cy < b[3] for b in boxes):
                out.append((xa, ya, xb, yb))
    bx = (xs[0], ys[0], xs[-1], ys[-1])
    return bx, out


def scaled_distance_to_complement(shape: Shape, px: np.ndarray, py: np.ndarray, N: int) -> np.ndarray:
    """N * dist_inf(p / N, shape^c) for integer lattice points p."""
    bbox, holes = _complement_cells(shape, N)
    d = np.minimum.reduce([px - bbox[0], bbox[2] - px, py - bbox[1], bbox[3] - py])
    d = np.maximum(d, 0.0)
    for xa, ya, xb, yb in holes:
        dx = np.maximum(np.maximum(xa - px, px - xb), 0.0)
        dy = np.maximum(np.maximum(ya - py, py - yb), 0.0)
        d = np.minimum(d, np.maximum(dx, dy))
    return d


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    """D_N = {x in Z^2 : dist(x/N, D^c) > 1/N} plus its outer vertex boundary."""

    shape: Shape
    N: int
    origin: tuple
    mask: np.ndarray = field(repr=False)

    @property
    def shape2d(self) -> tuple:
        return self.mask.shape

    @property
    def n_sites(self) -> int:
        return int(self.mask.sum())

    @property
    def sites(self) -> np.ndarray:
        """(M, 2) integer coordinates in mask (x-major) order."""
        ii, jj = np.nonzero(self.mask)
        return np.column_stack([ii + self.origin[0], jj + self.origin[1]])

    @property
    def boundary(self) -> np.ndarray:
        cross = ndimage.generate_binary_structure(2, 1)
        padded = np.pad(self.mask, 1)
        ring = ndimage.binary_dilation(padded, cross) & ~padded
        ii, jj = np.nonzero(ring)
        return np.column_stack([ii + self.origin[0] - 1, jj + self.origin[1] - 1])

    @property
    def is_rectangle(self) -> bool:
        ii, jj = np.nonzero(self.mask)
        return bool(self.mask[ii.min():ii.max() + 1, jj.min():jj.max() + 1].all())

    def index_grid(self) -> np.ndarray:
        """Site index per window cell, -1 outside the domain."""
        idx = np.full(self.mask.shape, -1, dtype=np.int64)
        idx[self.mask] = np.arange(self.n_sites)
        return idx

    def to_local(self, p) -> tuple:
        return int(p[0]) - self.origin[0], int(p[1]) - self.origin[1]

    def contains(self, p) -> bool:
        i, j = self.to_local(p)
        return 0 <= i < self.mask.shape[0] and 0 <= j < self.mask.shape[1] and bool(self.mask[i, j])

    def site_index(self, p) -> int:
        if not self.contains(p):
            raise KeyError(f"{tuple(p)} is not a site")
        i, j = self.to_local(p)
        return int(self.index_grid()[i, j])

    def center_site(self) -> tuple:
        ii, jj = np.nonzero(self.mask)
        return (int((ii.min() + ii.max()) // 2) + self.origin[0],
                int((jj.min() + jj.max()) // 2) + self.origin[1])


def discretize(shape: Shape, N: int) -> LatticeDomain:
    if N < 1:
        raise ValueError("N must be >= 1")
    x0, y0, x1, y1 = shape.bounds()
    lo_x, lo_y = math.floor(x0 * N), math.floor(y0 * N)
    hi_x, hi_y = math.ceil(x1 * N), math.ceil(y1 * N)
    xs = np.arange(lo_x, hi_x + 1)
    ys = np.arange(lo_y, hi_y + 1)
    px, py = np.meshgrid(xs, ys, indexing="ij")
    inside = scaled_distance_to_complement(shape, px.astype(float), py.astype(float), N) > 1.0
    if not inside.any():
        raise EmptyDomain(f"no lattice point qualifies at N={N}")
    ii, jj = np.nonzero(inside)
    sl = (slice(ii.min(), ii.max() + 1), slice(jj.min(), jj.max() + 1))
    origin = (int(xs[ii.min()]), int(ys[jj.min()]))
    return LatticeDomain(shape, N, origin, inside[sl].copy())


def distance_to_complement(dom: LatticeDomain) -> np.ndarray:
    """Lattice l-inf distance from every window cell to Z^2 minus D_N."""
    padded = np.pad(dom.mask, 1)
    d = ndimage.distance_transform_cdt(padded, metric="chessboard")
    return d[1:-1, 1:-1]


def delta_interior(dom: LatticeDomain, delta: float) -> np.ndarray:
    """Mask of D_N^delta = {x in D_N : dist(x, D_N^c) > delta N}."""
    return dom.mask & (distance_to_complement(dom) > delta * dom.N)


def kappa_of(delta: float) -> int:
    """Smallest k >= 1 with exp(-k) < delta."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    k = 1
    while math.exp(-k) >= delta:
        k += 1
    return k


def depth_of(N: int, kappa: int) -> int:
    """Smallest k >= 1 with N exp(-kappa - k) < 1."""
    k = 1
    while N * math.exp(-kappa - k) >= 1:
        k += 1
    return k


@dataclass(frozen=True, eq=False)
class ConcentricFrame:
    """Nested l-inf boxes Delta^k around ``root`` and the annulus label of each site.

    ``labels[i, j] = k`` means the site lies in Delta^k minus Delta^(k+1);
    cells outside the domain carry -1.
    """

    domain: LatticeDomain
    root: tuple
    delta: float
    kappa: int
    n: int
    labels: np.ndarray = field(repr=False)

    def radius(self, k: int) -> float:
        return self.domain.N * math.exp(-self.kappa - k)

    def box_mask(self, k: int) -> np.ndarray:
        """Delta^k as a mask over the domain window."""
        if k <= 0:
            return self.domain.mask.copy()
        return self.labels >= k

    def annulus_mask(self, k: int) -> np.ndarray:
        return self.labels == k

    def annulus_sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.n + 1)


def build_frame(dom: LatticeDomain, root, delta: float) -> ConcentricFrame:
    root = (int(root[0]), int(root[1]))
    inner = delta_interior(dom, delta)
    i0, j0 = dom.to_local(root)
    if not (0 <= i0 < inner.shape[0] and 0 <= j0 < inner.shape[1] and inner[i0, j0]):
        raise RootTooClose(f"root {root} is not in the {delta}-interior")
    kappa = kappa_of(delta)
    n = depth_of(dom.N, kappa)
    ii, jj = np.indices(dom.mask.shape)
    dist = np.maximum(np.abs(ii - i0), np.abs(jj - j0))
    labels = np.where(dom.mask, 0, -1)
    for k in range(1, n):
        labels[dom.mask & (dist < dom.N * math.exp(-kappa - k))] = k
    labels[i0, j0] = n
    if np.any((dist < dom.N * math.exp(-kappa - 1)) & ~dom.mask):
        raise RootTooClose("Delta^1 leaves the domain")
    return ConcentricFrame(dom, root, delta, kappa, n, labels)


def export_sites_csv(frame: ConcentricFrame, path) -> None:
    dom = frame.domain
    ii, jj = np.nonzero(dom.mask)
    with open(path, "w") as fh:
        fh.write("x,y,annulus_index\n")
        for i, j in zip(ii, jj):
            fh.write(f"{i + dom.origin[0]},{j + dom.origin[1]},{frame.labels[i, j]}\n")


def union(boxes: Sequence[Rectangle]) -> PolyominoUnion:
    return PolyominoUnion(tuple(boxes))
