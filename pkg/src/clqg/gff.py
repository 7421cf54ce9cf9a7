"""Dirichlet Green functions and samplers for the discrete Gaussian free field.

Normalisation: G^V(x, y) is the expected number of visits to y of a simple
random walk (step probability 1/4) started at x and killed on leaving V, so
``(I - P_V) G = I``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dstn

from clqg.errors import CapExceeded, NotRectangle
from clqg.lattice import LatticeDomain

DENSE_CAP = 20000
FIELD_MAGIC = 0x434C5147  # "CLQG"
FIELD_VERSION = 1


def walk_generator(dom: LatticeDomain) -> sp.csr_matrix:
    """I - P restricted to the sites (sites in mask order)."""
    idx = dom.index_grid()
    m = dom.n_sites
    rows, cols = [np.arange(m)], [np.arange(m)]
    vals = [np.ones(m)]
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        src = idx
        dst = np.full_like(idx, -1)
        a, b = idx.shape
        dst[max(0, -di):a - max(0, di), max(0, -dj):b - max(0, dj)] = \
            idx[max(0, di):a - max(0, -di), max(0, dj):b - max(0, -dj)]
        ok = (src >= 0) & (dst >= 0)
        rows.append(src[ok])
        cols.append(dst[ok])
        vals.append(np.full(int(ok.sum()), -0.25))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))


def rectangle_eigen(a: int, b: int) -> np.ndarray:
    """Eigenvalues of I - P on an a x b box, matching the orthonormal DST-I basis."""
    ci = np.cos(np.pi * np.arange(1, a + 1) / (a + 1))
    cj = np.cos(np.pi * np.arange(1, b + 1) / (b + 1))
    return 1.0 - 0.5 * (ci[:, None] + cj[None, :])


@dataclass(frozen=True, eq=False)
class GreenOperator:
    domain: LatticeDomain
    kind: str  # "dense" | "factored" | "spectral"
    _dense: Optional[np.ndarray] = field(default=None, repr=False)

    # -- shared pieces ----------------------------------------------------------

    @cached_property
    def generator(self) -> sp.csr_matrix:
        return walk_generator(self.domain)

    @cached_property
    def _lu(self):
        return spla.splu(self.generator.tocsc())

    @cached_property
    def _eigen(self) -> np.ndarray:
        return rectangle_eigen(*self.domain.mask.shape)

    @cached_property
    def _sin2(self):
        a, b = self.domain.mask.shape
        si = np.sin(np.pi * np.outer(np.arange(1, a + 1), np.arange(1, a + 1)) / (a + 1)) ** 2 * (2.0 / (a + 1))
        sj = np.sin(np.pi * np.outer(np.arange(1, b + 1), np.arange(1, b + 1)) / (b + 1)) ** 2 * (2.0 / (b + 1))
        return si, sj

    @cached_property
    def cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(self.matrix())

    @cached_property
    def precision_band(self):
        """Upper banded Cholesky factor U of I - P (so that G = U^-1 U^-T)."""
        q = self.generator.tocoo()
        bw = int(np.max(np.abs(q.row - q.col)))
        m = q.shape[0]
        ab = np.zeros((bw + 1, m))
        up = q.col >= q.row
        ab[bw + q.row[up] - q.col[up], q.col[up]] = q.data[up]
        return bw, sla.cholesky_banded(ab, lower=False)

    # -- queries ----------------------------------------------------------------

    def matrix(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        m = self.domain.n_sites
        if m > DENSE_CAP:
            raise CapExceeded(f"{m} sites exceed the dense cap {DENSE_CAP}")
        return np.column_stack([self.column_by_index(i) for i in range(m)])

    def column_by_index(self, i: int) -> np.ndarray:
        m = self.domain.n_sites
        if self.kind == "dense":
            return self._dense[:, i].copy()
        if self.kind == "factored":
            e = np.zeros(m)
            e[i] = 1.0
            return self._lu.solve(e)
        e = np.zeros(m)
        e[i] = 1.0
        grid = e.reshape(self.domain.mask.shape)
        return dstn(dstn(grid, type=1, norm="ortho") / self._eigen, type=1, norm="ortho").ravel()

    def column(self, site) -> np.ndarray:
        """G(., site) over all sites."""
        return self.column_by_index(self.domain.site_index(site))

    def entry(self, x, y) -> float:
        return float(self.column(y)[self.domain.site_index(x)])

    def diag(self, x) -> float:
        if self.kind == "spectral":
            i, j = self.domain.to_local(x)
            si, sj = self._sin2
            return float(si[i] @ (1.0 / self._eigen) @ sj[j])
        return self.entry(x, x)

    def row_identity_residual(self, cols=None) -> float:
        """max |(I - P) G - I| over the requested columns (all if None)."""
        m = self.domain.n_sites
        cols = range(m) if cols is None else cols
        worst = 0.0
        for c in cols:
            r = self.generator @ self.column_by_index(c)
            r[c] -= 1.0
            worst = max(worst, float(np.abs(r).max()))
        return worst


def green(dom: LatticeDomain, kind: str = "dense", dense_cap: int = DENSE_CAP) -> GreenOperator:
    if kind == "dense":
        if dom.n_sites > dense_cap:
            raise CapExceeded(f"{dom.n_sites} sites exceed the dense cap {dense_cap}")
        q = walk_generator(dom).toarray()
        g = sla.solve(q, np.eye(dom.n_sites), assume_a="pos")
        g = 0.5 * (g + g.T)
        return GreenOperator(dom, "dense", g)
    if kind == "factored":
        return GreenOperator(dom, "factored")
    if kind == "spectral":
        if not dom.is_rectangle:
            raise NotRectangle("the spectral representation needs a rectangular site set")
        return GreenOperator(dom, "spectral")
    raise ValueError(f"unknown Green representation {kind!r}")


# -- fields -------------------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    seed: int
    sampler: str  # "exact" | "spectral" | "injected"
    conditioning: Optional[tuple] = None  # (root, a)


@dataclass(frozen=True, eq=False)
class FieldSample:
    domain: LatticeDomain
    values: np.ndarray = field(repr=False)
    provenance: Provenance

    def __post_init__(self):
        if self.values.shape != (self.domain.n_sites,):
            raise ValueError("field values must align with the domain sites")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def grid(self, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.domain.mask.shape, fill)
        out[self.domain.mask] = self.values
        return out

    def at(self, site) -> float:
        return float(self.values[self.domain.site_index(site)])

    @property
    def root(self):
        c = self.provenance.conditioning
        return None if c is None else c[0]


def injected(dom: LatticeDomain, values) -> FieldSample:
    """Wrap given values as a field (fixtures, replays)."""
    vals = np.broadcast_to(np.asarray(values, dtype=float), (dom.n_sites,)).copy()
    return FieldSample(dom, vals, Provenance(0, "injected"))


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def exact_values(dom: LatticeDomain, g: GreenOperator, z: np.ndarray) -> np.ndarray:
    """Map standard normals (M,) or (M, k) to exact DGFF values."""
    if g.kind == "dense":
        return g.cholesky @ z
    bw, u = g.precision_band
    return sla.solve_banded((0, bw), u, z)


def sample(dom: LatticeDomain, g: GreenOperator, seed: int) -> FieldSample:
    """Exact sampler: Cholesky of G (dense) or of the banded precision I - P."""
    z = _rng(seed).standard_normal(dom.n_sites)
    return FieldSample(dom, exact_values(dom, g, z), Provenance(int(seed), "exact"))


def spectral_values(dom: LatticeDomain, z: np.ndarray, eigen: Optional[np.ndarray] = None) -> np.ndarray:
    if eigen is None:
        eigen = rectangle_eigen(*dom.mask.shape)
    return dstn(z / np.sqrt(eigen), type=1, norm="ortho").ravel()


def sample_spectral(dom: LatticeDomain, seed: int, eigen: Optional[np.ndarray] = None) -> FieldSample:
    """DST-I sampler on rectangles, O(V log V)."""
    if not dom.is_rectangle:
        raise NotRectangle("spectral sampling needs a rectangular site set")
    z = _rng(seed).standard_normal(dom.mask.shape)
    return FieldSample(dom, spectral_values(dom, z, eigen), Provenance(int(seed), "spectral"))


def condition_field(fs: FieldSample, g: GreenOperator, root, a: float,
                    column: Optional[np.ndarray] = None) -> FieldSample:
    """Turn an unconditioned sample into one with h(root) = a (Gaussian kriging)."""
    r = fs.domain.site_index(root)
    col = g.column_by_index(r) if column is None else column
    vals = fs.values + (a - fs.values[r]) * col / col[r]
    vals[r] = a
    prov = Provenance(fs.provenance.seed, fs.provenance.sampler, ((int(root[0]), int(root[1])), float(a)))
    return FieldSample(fs.domain, vals, prov)


def condition_root(dom: LatticeDomain, g: GreenOperator, root, a: float, seed: int,
                   sampler: str = "exact") -> FieldSample:
    base = sample_spectral(dom, seed) if sampler == "spectral" else sample(dom, g, seed)
    return condition_field(base, g, root, a)


def filter_max(fs: FieldSample, cap: float) -> bool:
    return bool(fs.values.max() <= cap)


# -- persistence ----------------------------------------------------------------


def write_field_bin(fs: FieldSample, path) -> None:
    """Header of eight 64-bit words, then the window grid row-major (rows = y).

    Words: magic, version, N, width, height, root_x, root_y, seed.  All are
    float64 except the seed, which is stored as its raw uint64 bit pattern.
    Cells outside the domain hold 0 (the Dirichlet boundary value).
    """
    dom = fs.domain
    width, height = dom.mask.shape
    root = fs.root if fs.root is not None else (-1, -1)
    head = struct.pack("<7dQ", FIELD_MAGIC, FIELD_VERSION, dom.N, width, height,
                       root[0], root[1], fs.provenance.seed & 0xFFFFFFFFFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(fs.grid().T, dtype="<f8").tobytes())


def read_field_bin(path):
    """Return (header dict, grid with shape (height, width))."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, N, width, height, rx, ry, seed = struct.unpack("<7dQ", raw[:64])
    if int(magic) != FIELD_MAGIC:
        raise ValueError("not a clqg field file")
    grid = np.frombuffer(raw[64:], dtype="<f8").reshape(int(height), int(width))
    head = {"version": int(version), "N": int(N), "width": int(width), "height": int(height),
            "root": (int(rx), int(ry)), "seed": int(seed)}
    return head, grid


def write_field_csv(fs: FieldSample, path) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,value\n")
        for (x, y), v in zip(fs.domain.sites, fs.values):
            fh.write(f"{x},{y},{v!r}\n")
