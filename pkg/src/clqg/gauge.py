"""Gauge-function calculus.

A gauge is specified through a decreasing profile ``psi``.  From it we derive

    gamma(t) = gamma_scale * sqrt(1 + t) * psi(t)
    phi(r)   = integral_{log(1/r)}^{inf} exp(-gamma(t)) dt

and the Motoo integral ``I_psi = integral_1^inf psi(t)/t dt`` whose
convergence decides which side of the carrier dichotomy a gauge falls on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from clqg.errors import DomainError, GaugeNotValidated, InvalidGauge, TailNotConvergent

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)

VALIDATION_POINTS = 1024
VALIDATION_T_MAX = 1e6
TAIL_CAP = 1e9


class IPsiClass(str, enum.Enum):
    DIVERGENT = "Divergent"
    CONVERGENT = "Convergent"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ParametricPsi:
    """psi(t) = c * log(1 + t)^(-theta)."""

    theta: float
    c: float = 1.0

    def __post_init__(self):
        if not (self.theta > 0 and self.c > 0):
            raise InvalidGauge(f"theta and c must be positive, got theta={self.theta}, c={self.c}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.c * np.log1p(t) ** (-self.theta)

    def gamma_monotone_from(self) -> float:
        # d/dt log(sqrt(1+t) log(1+t)^-theta) >= 0  iff  log(1+t) >= 2 theta
        return math.expm1(2.0 * self.theta)


@dataclass(frozen=True)
class TabulatedPsi:
    """Knot table interpolated monotonically (PCHIP) in log-log coordinates.

    Below the first knot the value is held constant; above the last knot the
    log-log slope of the final segment is continued.
    """

    t: tuple
    values: tuple
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise InvalidGauge("knot table needs at least two (t, psi) pairs")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise InvalidGauge("knot abscissae must be positive and strictly increasing")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise InvalidGauge("knot values must be positive and finite")
        object.__setattr__(self, "t", tuple(t.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))
        object.__setattr__(self, "_interp", PchipInterpolator(np.log(t), np.log(v), extrapolate=False))

    @classmethod
    def from_function(cls, fn, t_min=1e-6, t_max=1e6, num=4000) -> "TabulatedPsi":
        t = np.geomspace(t_min, t_max, num)
        return cls(tuple(t), tuple(np.asarray(fn(t), dtype=float)))

    @property
    def t_last(self) -> float:
        return self.t[-1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lt0, lt1 = math.log(self.t[0]), math.log(self.t[-1])
        with np.errstate(divide="ignore"):
            lt = np.log(t)
        inside = np.clip(lt, lt0, lt1)
        out = self._interp(inside)
        slope = (math.log(self.values[-1]) - math.log(self.values[-2])) / (lt1 - math.log(self.t[-2]))
        out = np.where(lt > lt1, math.log(self.values[-1]) + slope * (lt - lt1), out)
        return np.exp(out)


Psi = Union[ParametricPsi, TabulatedPsi]


@dataclass(frozen=True)
class GaugeTriple:
    """A psi profile together with the derived gamma and phi.

    ``force`` accepts profiles that violate the dichotomy hypotheses (psi
    decreasing, gamma -> infinity).  Independently of ``force``, ``phi`` is
    only available when gamma was verified nondecreasing on
    ``[t_min_monotone, 1e6]``.
    """

    psi: Psi
    gamma_scale: float = 1.0
    t_min_monotone: float = 0.0
    force: bool = False
    validated: bool = field(init=False, default=False)

    def __post_init__(self):
        if not self.gamma_scale > 0:
            raise InvalidGauge("gamma_scale must be positive")
        if self.t_min_monotone < 0:
            raise InvalidGauge("t_min_monotone must be nonnegative")
        if isinstance(self.psi, ParametricPsi):
            t0 = max(self.t_min_monotone, self.psi.gamma_monotone_from())
            object.__setattr__(self, "t_min_monotone", t0)
            object.__setattr__(self, "validated", True)
            return
        grid = np.geomspace(max(self.t_min_monotone, 1e-6), VALIDATION_T_MAX, VALIDATION_POINTS)
        psi = self.psi(grid)
        gam = self.gamma(grid)
        if not self.force:
            if np.any(np.diff(psi) > 1e-12 * psi[:-1]):
                raise InvalidGauge("psi is not decreasing on the validation grid")
            if not gam[-1] - gam[0] > 1e-6 * max(1.0, abs(gam[0])):
                raise InvalidGauge("gamma does not grow along the validation grid")
        monotone = bool(np.all(np.diff(gam) >= -1e-12 * np.abs(gam[:-1])))
        object.__setattr__(self, "validated", monotone)

    # -- evaluation -----------------------------------------------------------

    def gamma(self, t):
        return self.gamma_scale * np.sqrt(1.0 + np.asarray(t, dtype=float)) * self.psi(t)

    def phi(self, r: float, rtol: float = 1e-7) -> float:
        return eval_phi(self, r, rtol=rtol)

    def scaled(self, factor: float) -> "GaugeTriple":
        return GaugeTriple(self.psi, self.gamma_scale * factor, self.t_min_monotone, self.force)

    def to_record(self) -> dict:
        if isinstance(self.psi, ParametricPsi):
            return {"kind": "parametric", "theta": self.psi.theta, "c": self.psi.c,
                    "gamma_scale": self.gamma_scale}
        return {"kind": "tabulated", "knots": [list(p) for p in zip(self.psi.t, self.psi.values)],
                "gamma_scale": self.gamma_scale, "t_min_monotone": self.t_min_monotone}

    @classmethod
    def from_record(cls, rec: dict, force: bool = False) -> "GaugeTriple":
        kind = rec.get("kind")
        scale = float(rec.get("gamma_scale", 1.0))
        if kind == "parametric":
            psi = ParametricPsi(float(rec["theta"]), float(rec.get("c", 1.0)))
            return cls(psi, scale, force=force)
        if kind == "tabulated":
            t, v = zip(*rec["knots"])
            return cls(TabulatedPsi(t, v), scale, float(rec.get("t_min_monotone", 0.0)), force=force)
        raise InvalidGauge(f"unknown gauge kind {kind!r}")


@dataclass(frozen=True)
class PowerGauge:
    """phi_s(r) = r**s, the gauge behind Hausdorff dimension."""

    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise InvalidGauge("power gauge exponent must be positive")

    def phi(self, r):
        return np.asarray(r, dtype=float) ** self.s


def parametric(theta: float, c: float = 1.0, gamma_scale: float = 1.0) -> GaugeTriple:
    return GaugeTriple(ParametricPsi(theta, c), gamma_scale)


def eval_gamma(g: GaugeTriple, t: float) -> float:
    if t < 0:
        raise DomainError(f"gamma is defined for t >= 0, got {t}")
    return float(g.gamma(t))


def _gl(f, lo: float, hi: float) -> float:
    half = 0.5 * (hi - lo)
    x = lo + half * (_GL_NODES + 1.0)
    return half * float(np.dot(_GL_WEIGHTS, f(x)))


def _adaptive(f, lo: float, hi: float, rtol: float, floor: float) -> float:
    total = 0.0
    stack = [(lo, hi, _gl(f, lo, hi), 0)]
    while stack:
        a, b, whole, depth = stack.pop()
        m = 0.5 * (a + b)
        left, right = _gl(f, a, m), _gl(f, m, b)
        if abs(left + right - whole) <= rtol * max(abs(left + right), floor + total) or depth > 40:
            total += left + right
        else:
            stack.append((a, m, left, depth + 1))
            stack.append((m, b, right, depth + 1))
    return total


def _tail_bound(g: GaugeTriple, T: float) -> float:
    # each doubling panel [2^j T, 2^(j+1) T] is at most 2^j T exp(-gamma(2^j T))
    ts = T * 2.0 ** np.arange(64)
    terms = ts * np.exp(-g.gamma(ts))
    return float(terms.sum())


def eval_phi(g: GaugeTriple, r: float, rtol: float = 1e-7) -> float:
    """phi(r) by Gauss-Legendre panels on a geometric grid plus doubling truncation."""
    if not g.validated:
        raise GaugeNotValidated("gamma was not verified nondecreasing; phi is unavailable")
    if not 0 < r < 1:
        raise DomainError(f"phi needs r in (0, 1), got {r}")
    a = math.log(1.0 / r)
    f = lambda t: np.exp(-g.gamma(t))  # noqa: E731

    T = max(a + 1.0, g.t_min_monotone, 1.0)
    # geometric panels from a up to T
    value = 0.0
    lo, width = a, 0.25
    while lo < T:
        hi = min(lo + width, T)
        value += _adaptive(f, lo, hi, rtol, value)
        lo, width = hi, 2.0 * width
    while True:
        if _tail_bound(g, T) <= rtol * value:
            return value
        if 2.0 * T > TAIL_CAP:
            raise TailNotConvergent(f"tail bound not met before T={TAIL_CAP:g} (r={r})")
        value += _adaptive(f, T, 2.0 * T, rtol, value)
        T *= 2.0


def classify_I_psi(g: GaugeTriple, horizon_cap: float = 2.0**200, tol: float = 1e-3) -> IPsiClass:
    """Decide convergence of the Motoo integral.

    Parametric profiles are classified exactly (divergent iff theta <= 1).
    Tabulated profiles are probed on doubling horizons within the knot range:
    the increments d_j over [2^j, 2^(j+1)] either stabilise (geometric decay or
    power decay faster than 1/j) or behave like 1/j or slower, which is growth
    at least linear in log log of the horizon.
    """
    if isinstance(g.psi, ParametricPsi):
        return IPsiClass.DIVERGENT if g.psi.theta <= 1 else IPsiClass.CONVERGENT

    horizon = min(horizon_cap, g.psi.t_last)
    J = int(math.floor(math.log2(horizon))) if horizon > 1 else 0
    if J < 8:
        return IPsiClass.INCONCLUSIVE
    ln2 = math.log(2.0)
    h = lambda s: g.psi(np.exp(s))  # noqa: E731
    d = np.array([_adaptive(h, j * ln2, (j + 1) * ln2, 1e-10, 0.0) for j in range(J)])
    partial = float(d.sum())
    js = np.arange(J)
    window = js >= max(1, J // 2)
    dw = d[window]
    if np.all(dw <= 1e-300):
        return IPsiClass.CONVERGENT

    ratios = dw[1:] / dw[:-1]
    if ratios.size and np.max(ratios) <= 0.75:
        q = float(np.max(ratios))
        if dw[-1] * q / (1 - q) <= tol * partial:
            return IPsiClass.CONVERGENT
    p = -np.polyfit(np.log(js[window] + 0.5), np.log(dw), 1)[0]
    if p > 1.2:
        return IPsiClass.CONVERGENT
    if p <= 1.05:
        return IPsiClass.DIVERGENT
    return IPsiClass.INCONCLUSIVE
