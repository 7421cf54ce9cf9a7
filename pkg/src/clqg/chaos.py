"""The lattice critical chaos measure Z_N^D and size-biased sampling from it.

    Z_N^D = (1 / log N) * sum_x exp(alpha (h_x - m_N)) delta_{x/N}

with alpha = 2 / sqrt(g), g = 2 / pi and the extremal centring m_N.
Ball queries use closed l-inf balls in scaled coordinates and are answered
from a summed-area table, so every query is O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from clqg.errors import DegenerateMeasure, IndexRange
from clqg.gff import FieldSample, _rng
from clqg.lattice import ConcentricFrame, LatticeDomain

G_CONST = 2.0 / math.pi
ALPHA = 2.0 / math.sqrt(G_CONST)  # = sqrt(2 pi)


def m_N(N: float) -> float:
    """Extremal centring 2 sqrt(g) log N - (3/4) sqrt(g) log log max(N, e)."""
    sg = math.sqrt(G_CONST)
    return 2.0 * sg * math.log(N) - 0.75 * sg * math.log(math.log(max(N, math.e)))


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Nonnegative weights on the sites of a lattice domain, placed at x / N."""

    domain: LatticeDomain
    weights: np.ndarray = field(repr=False)

    @cached_property
    def total(self) -> float:
        return float(np.sum(self.weights))

    @cached_property
    def weight_grid(self) -> np.ndarray:
        w = np.zeros(self.domain.mask.shape)
        w[self.domain.mask] = self.weights
        return w

    @cached_property
    def _sat(self) -> np.ndarray:
        s = np.zeros((self.weight_grid.shape[0] + 1, self.weight_grid.shape[1] + 1))
        s[1:, 1:] = self.weight_grid.cumsum(0).cumsum(1)
        return s

    def _box_sum(self, i0, i1, j0, j1):
        """Sum over window cells i0 <= i < i1, j0 <= j < j1 (arrays allowed)."""
        a, b = self.weight_grid.shape
        i0, i1 = np.clip(i0, 0, a), np.clip(i1, 0, a)
        j0, j1 = np.clip(j0, 0, b), np.clip(j1, 0, b)
        s = self._sat
        out = s[i1, j1] - s[i0, j1] - s[i1, j0] + s[i0, j0]
        return np.where((i1 > i0) & (j1 > j0), out, 0.0)

    def ball_mass(self, center, r: float) -> float:
        """Mass of sites x with dist_inf(x / N, center) <= r."""
        return float(self.ball_masses(np.asarray(center, dtype=float)[None, :], r)[0])

    def ball_masses(self, centers: np.ndarray, r: float) -> np.ndarray:
        N = self.domain.N
        c = np.asarray(centers, dtype=float) * N
        rad = r * N
        ox, oy = self.domain.origin
        i0 = np.ceil(c[:, 0] - rad - 1e-9).astype(np.int64) - ox
        i1 = np.floor(c[:, 0] + rad + 1e-9).astype(np.int64) - ox + 1
        j0 = np.ceil(c[:, 1] - rad - 1e-9).astype(np.int64) - oy
        j1 = np.floor(c[:, 1] + rad + 1e-9).astype(np.int64) - oy + 1
        return self._box_sum(i0, i1, j0, j1)

    def annulus_mass_between(self, center, r1: float, r2: float) -> float:
        """Mass with r1 < dist <= r2."""
        return self.ball_mass(center, r2) - self.ball_mass(center, r1)

    def site_weight(self, site) -> float:
        return float(self.weights[self.domain.site_index(site)])

    def mass_on(self, mask: np.ndarray) -> float:
        return float(self.weight_grid[mask].sum())


@dataclass(frozen=True, eq=False)
class CriticalMeasure(AtomicMeasure):
    field_sample: FieldSample = field(default=None, repr=False)
    alpha: float = ALPHA
    g: float = G_CONST
    mN: float = 0.0
    N: int = 0
    log_weights: np.ndarray = field(default=None, repr=False)


def build_measure(fs: FieldSample) -> CriticalMeasure:
    N = fs.domain.N
    if N < 3:
        raise ValueError("the critical measure needs N >= 3")
    mn = m_N(N)
    logw = ALPHA * (fs.values - mn) - math.log(math.log(N))
    return CriticalMeasure(fs.domain, np.exp(logw), fs, ALPHA, G_CONST, mn, N, logw)


def lebesgue(dom: LatticeDomain) -> AtomicMeasure:
    """Counting measure scaled by N^-2, a lattice stand-in for Lebesgue measure."""
    return AtomicMeasure(dom, np.full(dom.n_sites, 1.0 / dom.N ** 2))


def annulus_mass(m: AtomicMeasure, frame: ConcentricFrame, k: int) -> float:
    """Mass of Delta^k minus Delta^(k+1), 1 <= k <= n."""
    if not 1 <= k <= frame.n:
        raise IndexRange(f"annulus index {k} outside 1..{frame.n}")
    return m.mass_on(frame.annulus_mask(k))


@dataclass(frozen=True)
class SizeBiasedDraw:
    point: tuple  # lattice site
    index: int
    seed: int
    field_seed: int

    def scaled(self, N: int) -> np.ndarray:
        return np.array(self.point, dtype=float) / N


def draw_point(m: AtomicMeasure, seed: int) -> SizeBiasedDraw:
    """Categorical draw with probability weight / total (one uniform, inverse CDF)."""
    total = m.total
    if not (total > 0 and math.isfinite(total)):
        raise DegenerateMeasure(f"cannot sample from a measure of total mass {total}")
    cdf = np.cumsum(m.weights)
    u = _rng(seed).random() * cdf[-1]
    i = int(np.searchsorted(cdf, u, side="right"))
    i = min(i, len(cdf) - 1)
    site = tuple(int(v) for v in m.domain.sites[i])
    fseed = getattr(getattr(m, "field_sample", None), "provenance", None)
    return SizeBiasedDraw(site, i, int(seed), fseed.seed if fseed is not None else 0)


def near_extremal_statistic(fs: FieldSample, draw: SizeBiasedDraw) -> float:
    """(m_N - h(X)) / sqrt(log N)."""
    N = fs.domain.N
    return (m_N(N) - float(fs.values[draw.index])) / math.sqrt(math.log(N))
