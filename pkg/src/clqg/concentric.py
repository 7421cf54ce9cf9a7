"""Spine random walk and control variables of the concentric decomposition.

For a frame rooted at x0 the walk is S_k = harmonic average of h over the
outer boundary of Delta^k, read at x0.  Conventions: S_0 = 0 (the boundary
of D_N carries zero data) and S_n = h(x0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla
from scipy import ndimage
from scipy.fft import dstn

from clqg.chaos import ALPHA, AtomicMeasure, annulus_mass, m_N
from clqg.errors import EmptyAnnulus, SolverFailure
from clqg.gff import FieldSample, GreenOperator, rectangle_eigen, walk_generator
from clqg.lattice import ConcentricFrame, LatticeDomain

DIRECT_BELOW = 5000
RESIDUAL_TOL = 1e-10

_CROSS = ndimage.generate_binary_structure(2, 1)


def _submask_domain(parent: LatticeDomain, mask: np.ndarray) -> LatticeDomain:
    ii, jj = np.nonzero(mask)
    sl = (slice(ii.min(), ii.max() + 1), slice(jj.min(), jj.max() + 1))
    origin = (parent.origin[0] + int(ii.min()), parent.origin[1] + int(jj.min()))
    return LatticeDomain(parent.shape, parent.N, origin, mask[sl].copy())


def _solve(A, b: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    if n < DIRECT_BELOW:
        x = spla.spsolve(A.tocsc(), b)
    else:
        x, info = spla.cg(A, b, rtol=RESIDUAL_TOL * 1e-2, atol=0.0, maxiter=20 * n)
        if info != 0:
            raise SolverFailure(f"CG did not converge (info={info}) on {n} unknowns")
    res = float(np.abs(A @ x - b).max())
    if res > RESIDUAL_TOL * max(1.0, float(np.abs(b).max())):
        raise SolverFailure(f"residual {res:.3g} above {RESIDUAL_TOL:g}")
    return x


def harmonic_extension_at(region: LatticeDomain, outer_values, point) -> float:
    """Value at ``point`` of the function harmonic in ``region`` that equals
    ``outer_values(x, y)`` on the outer vertex boundary of the region."""
    A = walk_generator(region)
    bnd = region.boundary
    vals = np.asarray(outer_values(bnd[:, 0], bnd[:, 1]), dtype=float)
    idx = region.index_grid()
    b = np.zeros(region.n_sites)
    for (x, y), v in zip(bnd, vals):
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            i, j = x + dx - region.origin[0], y + dy - region.origin[1]
            if 0 <= i < idx.shape[0] and 0 <= j < idx.shape[1] and idx[i, j] >= 0:
                b[idx[i, j]] += 0.25 * v
    u = _solve(A, b)
    return float(u[region.site_index(point)])


@dataclass(frozen=True, eq=False)
class SpineOperator:
    """Per-frame hitting distributions of the box boundaries, seen from x0.

    ``measures[k]`` lists (window index i, window index j, weight) of the
    harmonic measure of the outer boundary of Delta^k, for 1 <= k <= n-1;
    ``green_root[k]`` is G_{Delta^k}(x0, x0).
    """

    frame: ConcentricFrame
    measures: dict = field(repr=False)
    green_root: dict = field(repr=False)

    def walk(self, fs: FieldSample) -> np.ndarray:
        return self.walk_grid(fs.grid(), fs.at(self.frame.root))

    def walk_grid(self, grid: np.ndarray, root_value: float) -> np.ndarray:
        n = self.frame.n
        S = np.zeros(n + 1)
        for k in range(1, n):
            i, j, w = self.measures[k]
            S[k] = float(w @ grid[i, j])
        S[n] = root_value
        return S


def spine_operator(frame: ConcentricFrame) -> SpineOperator:
    """Solve once per box for G_{Delta^k}(x0, .) and turn it into hitting weights."""
    dom = frame.domain
    kernel = _CROSS.astype(float)
    kernel[1, 1] = 0.0
    measures, groot = {}, {}
    for k in range(1, frame.n):
        box = frame.box_mask(k)
        sub = _submask_domain(dom, box)
        e = np.zeros(sub.n_sites)
        r = sub.site_index(frame.root)
        e[r] = 1.0
        gcol = _solve(walk_generator(sub), e)  # G(x0, .) by symmetry
        groot[k] = float(gcol[r])
        ggrid = _scatter(sub, gcol, dom)
        # P(first exit lands on y) = sum over box neighbours x of G(x0, x) / 4
        hm = 0.25 * ndimage.convolve(ggrid, kernel, mode="constant")
        ring = ndimage.binary_dilation(box, _CROSS) & ~box
        ii, jj = np.nonzero(ring)
        measures[k] = (ii, jj, hm[ii, jj])
    return SpineOperator(frame, measures, groot)


def _scatter(sub: LatticeDomain, values: np.ndarray, dom: LatticeDomain) -> np.ndarray:
    out = np.zeros(dom.mask.shape)
    oi, oj = sub.origin[0] - dom.origin[0], sub.origin[1] - dom.origin[1]
    block = np.zeros(sub.mask.shape)
    block[sub.mask] = values
    out[oi:oi + block.shape[0], oj:oj + block.shape[1]] = block
    return out


def spine_walk(fs: FieldSample, frame: ConcentricFrame, op: Optional[SpineOperator] = None) -> np.ndarray:
    """S_0..S_n for one field."""
    op = spine_operator(frame) if op is None else op
    return op.walk(fs)


def spine_walk_dirichlet(fs: FieldSample, frame: ConcentricFrame) -> np.ndarray:
    """Same walk, by solving one Dirichlet problem per box (reference route)."""
    dom = frame.domain
    grid = fs.grid()
    n = frame.n
    S = np.zeros(n + 1)

    def data(x, y):
        i, j = x - dom.origin[0], y - dom.origin[1]
        inside = (i >= 0) & (i < grid.shape[0]) & (j >= 0) & (j < grid.shape[1])
        out = np.zeros(len(x))
        out[inside] = grid[i[inside], j[inside]]
        return out

    for k in range(1, n):
        sub = _submask_domain(dom, frame.box_mask(k))
        S[k] = harmonic_extension_at(sub, data, frame.root)
    S[n] = fs.at(frame.root)
    return S


def step_variances(g: GreenOperator, frame: ConcentricFrame, op: Optional[SpineOperator] = None) -> np.ndarray:
    """t_k = alpha^2 (G_{D_N}(x0, x0) - G_{Delta^k}(x0, x0)), with t_0 = 0."""
    op = spine_operator(frame) if op is None else op
    gdd = g.diag(frame.root)
    t = np.zeros(frame.n + 1)
    for k in range(1, frame.n):
        t[k] = ALPHA ** 2 * (gdd - op.green_root[k])
    t[frame.n] = ALPHA ** 2 * (gdd - 1.0)
    return t


@dataclass(frozen=True, eq=False)
class ConcentricStats:
    frame: ConcentricFrame
    S: np.ndarray
    t: np.ndarray
    b: np.ndarray
    S_hat: np.ndarray
    S_tilde: np.ndarray
    Xi: dict  # k -> Xi_k for nonempty annuli, 1 <= k <= n
    K: Optional[int] = None


def offsets(frame: ConcentricFrame) -> np.ndarray:
    """b_k = m_N - m_{N e^-k}."""
    N = frame.domain.N
    return np.array([m_N(N) - m_N(N * math.exp(-k)) for k in range(frame.n + 1)])


def extract_xi(measure: AtomicMeasure, S: np.ndarray, frame: ConcentricFrame, k: int) -> float:
    """Xi_k = log Z_N(A_k) - alpha [S_k - m_N + m_{N e^-k}]."""
    mass = annulus_mass(measure, frame, k)
    if mass <= 0:
        raise EmptyAnnulus(f"annulus {k} carries no sites")
    N = frame.domain.N
    return math.log(mass) - ALPHA * (S[k] - m_N(N) + m_N(N * math.exp(-k)))


def control_variable(xi: dict, eta: float, ell: int, n: int) -> int:
    """Smallest K in {0..min(ell, n)} with |Xi_k| <= k^eta for all K <= k <= min(ell, n).

    Xi is indexed from k = 1, so K = 0 imposes the same constraint as K = 1.
    Candidates past min(ell, n) would hold vacuously and are not considered.
    If no K qualifies the value min(ell, floor(n / 2)) + 1 is returned.
    """
    top = min(ell, n)
    for K in range(0, top + 1):
        ks = range(max(K, 1), top + 1)
        if all(k in xi and abs(xi[k]) <= k ** eta for k in ks):
            return K
    return min(ell, n // 2) + 1


def concentric_stats(fs: FieldSample, measure: AtomicMeasure, frame: ConcentricFrame, t: np.ndarray,
                     op: Optional[SpineOperator] = None, eta: Optional[float] = None,
                     ell: Optional[int] = None) -> ConcentricStats:
    S = spine_walk(fs, frame, op)
    N = frame.domain.N
    mn = m_N(N)
    b = offsets(frame)
    S_hat = -ALPHA * S + ALPHA * (t / t[-1]) * mn
    S_tilde = -ALPHA * S + ALPHA * b
    xi = {}
    for k in range(1, frame.n + 1):
        try:
            xi[k] = extract_xi(measure, S, frame, k)
        except EmptyAnnulus:
            continue
    K = control_variable(xi, eta, ell, frame.n) if eta is not None and ell is not None else None
    return ConcentricStats(frame, S, t, b, S_hat, S_tilde, xi, K)


def spine_noise_loadings(op: SpineOperator) -> np.ndarray:
    """Rows u_k with S_k = <u_k, z> for the spectral sampler fed with noise z.

    The spectral sampler sets h = D(z / sqrt(lambda)) with D the orthonormal,
    symmetric DST-I, so <w, h> = <D(w) / sqrt(lambda), z>.  Projecting the
    noise is then exactly the walk of the field that noise would produce.
    """
    frame = op.frame
    dom = frame.domain
    if not dom.is_rectangle:
        raise ValueError("noise loadings need a rectangular site set")
    root_scale = 1.0 / np.sqrt(rectangle_eigen(*dom.mask.shape))
    rows = np.zeros((frame.n + 1, dom.n_sites))
    for k in range(1, frame.n + 1):
        w = np.zeros(dom.mask.shape)
        if k < frame.n:
            i, j, wk = op.measures[k]
            w[i, j] = wk
        else:
            w[dom.to_local(frame.root)] = 1.0
        rows[k] = (dstn(w, type=1, norm="ortho") * root_scale).ravel()
    return rows
