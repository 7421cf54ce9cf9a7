"""The experiments behind the ``clqg`` command.

Each runner maps a config to ``(columns, rows, results)``.  Replicas use
``derive_seed(cfg.seed, i)`` and are folded in index order, so a run is a
pure function of the config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from clqg import bessel, concentric, hausdorff
from clqg.chaos import ALPHA, G_CONST, build_measure, draw_point, lebesgue, m_N, near_extremal_statistic
from clqg.errors import ConfigError
from clqg.gauge import PowerGauge, parametric
from clqg.gff import (
    FieldSample, GreenOperator, _rng, condition_field, green, rectangle_eigen, sample, sample_spectral,
)
from clqg.harness.config import ExperimentConfig
from clqg.harness.seeds import derive_seed
from clqg.lattice import LatticeDomain, PolyominoUnion, Rectangle, build_frame, discretize, kappa_of


@dataclass
class Outcome:
    columns: tuple
    rows: list
    results: dict
    field: FieldSample = None


# -- shared plumbing ----------------------------------------------------------------


def parse_domain(desc: str):
    """'square', 'rect:x0,y0,w,h' or 'union:x0,y0,w,h;x0,y0,w,h;...'."""
    try:
        if desc == "square":
            return Rectangle(0.0, 0.0, 1.0, 1.0)
        kind, _, body = desc.partition(":")
        boxes = [Rectangle(*(float(v) for v in part.split(","))) for part in body.split(";") if part.strip()]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad domain descriptor {desc!r}: {exc}") from None
    if kind == "rect" and len(boxes) == 1:
        return boxes[0]
    if kind == "union" and boxes:
        return PolyominoUnion(tuple(boxes))
    raise ConfigError(f"bad domain descriptor {desc!r}")


def lattice_domain(cfg: ExperimentConfig, N: int = None) -> LatticeDomain:
    dom = discretize(parse_domain(cfg.domain), cfg.N if N is None else N)
    if not dom.is_rectangle and dom.n_sites > 128 * 128:
        raise ConfigError("non-rectangular domains are limited to 128^2 sites (no spectral sampler)")
    return dom


def root_site(cfg: ExperimentConfig, dom: LatticeDomain) -> tuple:
    if cfg.root == "center":
        return dom.center_site()
    try:
        x, y = (int(v) for v in cfg.root.split(","))
    except ValueError:
        raise ConfigError(f"bad root {cfg.root!r}") from None
    return x, y


class FieldSource:
    """Field sampler bound to a domain; spectral when possible and requested."""

    def __init__(self, dom: LatticeDomain, kind: str):
        self.dom = dom
        self.spectral = kind == "spectral" and dom.is_rectangle
        self.eigen = rectangle_eigen(*dom.mask.shape) if self.spectral else None
        self.green: GreenOperator = green(dom, "spectral" if self.spectral else
                                          ("dense" if dom.n_sites <= 4096 else "factored"))

    def __call__(self, seed: int) -> FieldSample:
        if self.spectral:
            return sample_spectral(self.dom, seed, self.eigen)
        return sample(self.dom, self.green, seed)


def k_max_of(N: int, delta: float) -> int:
    """floor(log N) - kappa(delta) - 1."""
    return int(math.floor(math.log(N))) - kappa_of(delta) - 1


def _slope(x, y) -> float:
    return float(np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)[0])


def _spearman(x, y) -> float:
    if np.ptp(np.asarray(x, float)) == 0 or np.ptp(np.asarray(y, float)) == 0:
        return float("nan")  # undefined for constant input
    r = stats.spearmanr(x, y).statistic
    return float(r) if np.isfinite(r) else float("nan")


# -- green-check ----------------------------------------------------------------------


def _walk_visits(dom: LatticeDomain, start, targets, n_walks: int, rng) -> np.ndarray:
    """(n_walks, len(targets)) visit counts, time 0 included, until the walk leaves."""
    mask = dom.mask
    i0, j0 = dom.to_local(start)
    pos_i = np.full(n_walks, i0)
    pos_j = np.full(n_walks, j0)
    tl = [dom.to_local(t) for t in targets]
    counts = np.zeros((n_walks, len(targets)))
    live = np.arange(n_walks)
    steps = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)])
    while live.size:
        for c, (ti, tj) in enumerate(tl):
            hit = (pos_i == ti) & (pos_j == tj)
            counts[live[hit], c] += 1
        mv = steps[rng.integers(0, 4, live.size)]
        pos_i = pos_i + mv[:, 0]
        pos_j = pos_j + mv[:, 1]
        inside = (pos_i >= 0) & (pos_i < mask.shape[0]) & (pos_j >= 0) & (pos_j < mask.shape[1])
        inside[inside] = mask[pos_i[inside], pos_j[inside]]
        live, pos_i, pos_j = live[inside], pos_i[inside], pos_j[inside]
    return counts


def run_green_check(cfg: ExperimentConfig) -> Outcome:
    rows = []
    # singleton and adjacent pair
    single = discretize(Rectangle(0, 0, 1, 1), 4)
    g1 = green(single).matrix()
    pair = discretize(Rectangle(0, 0, 1.25, 1), 4)
    g2 = green(pair).matrix()
    res = {"singleton": float(g1[0, 0]), "pair_diag": float(g2[0, 0]), "pair_off": float(g2[0, 1]),
           "pair_error": float(max(abs(g2[0, 0] - 16 / 15), abs(g2[0, 1] - 4 / 15), abs(g1[0, 0] - 1)))}
    # Monte Carlo walks on a green_box x green_box site block
    box = discretize(Rectangle(0, 0, 1, 1), cfg.green_box + 3)
    G = green(box).matrix()
    rng = _rng(derive_seed(cfg.seed, 0))
    sites = box.sites
    picks = rng.choice(len(sites), size=(cfg.green_entries, 2))
    worst = 0.0
    by_start = {}
    for a, b in picks:
        by_start.setdefault(int(a), []).append(int(b))
    for a in sorted(by_start):
        targets = [tuple(sites[b]) for b in by_start[a]]
        cnt = _walk_visits(box, tuple(sites[a]), targets, cfg.walks, _rng(derive_seed(cfg.seed, a + 1)))
        for c, b in enumerate(by_start[a]):
            est = float(cnt[:, c].mean())
            se = float(cnt[:, c].std(ddof=1) / math.sqrt(cfg.walks))
            exact = float(G[a, b])
            z = (est - exact) / se if se > 0 else (0.0 if est == exact else math.inf)
            worst = max(worst, abs(z))
            rows.append(("walk", int(sites[a][0]), int(sites[a][1]), int(sites[b][0]), int(sites[b][1]),
                         exact, est, se, z))
    res["walk_max_abs_z"] = worst
    res["walks"] = cfg.walks
    # log increments of the centre variance
    diags = []
    for N in cfg.green_N_list:
        dom = discretize(Rectangle(0, 0, 1, 1), N)
        g = green(dom, "spectral")
        diags.append(g.diag(dom.center_site()))
        rows.append(("center-diag", N, 0, 0, 0, float("nan"), diags[-1], 0.0, 0.0))
    incs = []
    for (N0, d0), (N1, d1) in zip(zip(cfg.green_N_list, diags), zip(cfg.green_N_list[1:], diags[1:])):
        target = G_CONST * math.log(N1 / N0)
        incs.append({"N0": N0, "N1": N1, "increment": d1 - d0, "target": target,
                     "rel_error": abs(d1 - d0 - target) / target})
    res["log_increments"] = incs
    cols = ("check", "x", "y", "x2", "y2", "exact", "estimate", "se", "z")
    return Outcome(cols, rows, res)


# -- field-stats ----------------------------------------------------------------------


def run_field_stats(cfg: ExperimentConfig) -> Outcome:
    dom = discretize(Rectangle(0, 0, 1, 1), cfg.field_box + 3)
    g = green(dom, "dense")
    G = g.matrix()
    m = dom.n_sites
    rng = _rng(derive_seed(cfg.seed, 2 ** 32))
    pairs = rng.choice(m, size=(10, 2), replace=True)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    ks_sites = rng.choice(m, size=cfg.ks_sites, replace=False)
    R = cfg.replicas
    diag_sum = np.zeros(m)
    pair_prod = np.zeros((R, len(pairs)))
    ex_ks = np.zeros((R, len(ks_sites)))
    sp_ks = np.zeros((R, len(ks_sites)))
    for r in range(R):
        s = derive_seed(cfg.seed, r)
        h = sample(dom, g, s).values
        diag_sum += h * h
        pair_prod[r] = h[pairs[:, 0]] * h[pairs[:, 1]]
        ex_ks[r] = h[ks_sites]
        sp_ks[r] = sample_spectral(dom, derive_seed(s, 1)).values[ks_sites]
    var = diag_sum / R
    rel = np.abs(var / np.diag(G) - 1.0)
    rows = []
    for i in range(m):
        x, y = dom.sites[i]
        rows.append(("diag", int(x), int(y), int(x), int(y), float(G[i, i]), float(var[i]), float("nan"), float(rel[i])))
    zs = []
    for c, (i, j) in enumerate(pairs):
        est = float(pair_prod[:, c].mean())
        se = float(pair_prod[:, c].std(ddof=1) / math.sqrt(R))
        z = (est - G[i, j]) / se
        zs.append(abs(z))
        rows.append(("offdiag", *map(int, dom.sites[i]), *map(int, dom.sites[j]), float(G[i, j]), est, se, float(z)))
    ps = []
    for c, i in enumerate(ks_sites):
        p = float(stats.ks_2samp(ex_ks[:, c], sp_ks[:, c]).pvalue)
        ps.append(p)
        rows.append(("ks", *map(int, dom.sites[i]), 0, 0, float("nan"), float("nan"), float("nan"), p))
    res = {"sites": m, "draws": R, "diag_max_rel_error": float(rel.max()),
           "offdiag_max_abs_z": float(max(zs)), "offdiag_pairs": len(zs), "ks_min_p": float(min(ps))}
    return Outcome(("check", "x", "y", "x2", "y2", "green", "estimate", "se", "stat"), rows, res)


# -- extremes -------------------------------------------------------------------------


def run_max_tail(cfg: ExperimentConfig) -> Outcome:
    dom = lattice_domain(cfg)
    src = FieldSource(dom, cfg.sampler)
    mn = m_N(cfg.N)
    rows, excess = [], np.empty(cfg.replicas)
    first = None
    for r in range(cfg.replicas):
        s = derive_seed(cfg.seed, r)
        fs = src(s)
        first = fs if first is None else first
        excess[r] = fs.values.max() - mn
        rows.append((r, s, float(excess[r])))
    u = np.asarray(cfg.u_grid)
    freq = np.array([np.mean(excess > x) for x in u])
    pos = freq > 0
    slope = _slope(u[pos], np.log(freq[pos])) if pos.sum() >= 2 else float("nan")
    res = {"N": cfg.N, "m_N": mn, "u_grid": list(map(float, u)), "frequencies": list(map(float, freq)),
           "log_slope": slope, "target_slope": -ALPHA, "mean_excess": float(excess.mean())}
    return Outcome(("replica", "seed", "max_minus_mN"), rows, res, first)


def run_near_extremal(cfg: ExperimentConfig) -> Outcome:
    dom = lattice_domain(cfg)
    src = FieldSource(dom, cfg.sampler)
    rows, stat = [], np.empty(cfg.replicas)
    first = None
    for r in range(cfg.replicas):
        s = derive_seed(cfg.seed, r)
        fs = src(s)
        first = fs if first is None else first
        d = draw_point(build_measure(fs), derive_seed(s, 1))
        stat[r] = near_extremal_statistic(fs, d)
        rows.append((r, s, d.point[0], d.point[1], float(fs.values[d.index]), float(stat[r])))
    out = np.mean((stat < 0) | (stat > cfg.a))
    res = {"N": cfg.N, "a": cfg.a, "p_outside": float(out), "p_below_zero": float(np.mean(stat < 0)),
           "p_above_a": float(np.mean(stat > cfg.a)), "median": float(np.median(stat)),
           "target": math.exp(-cfg.a ** 2 / (2 * G_CONST))}
    return Outcome(("replica", "seed", "x", "y", "h", "statistic"), rows, res, first)


# -- ball decay and dichotomy -------------------------------------------------------------


def _ball_mass_table(cfg: ExperimentConfig):
    """Per replica: M_k = Z(B(X, e^-k)) for k = 2..k_max at a size-biased X."""
    dom = lattice_domain(cfg)
    src = FieldSource(dom, cfg.sampler)
    kmax = k_max_of(cfg.N, cfg.delta)
    if kmax < max(2, cfg.k_min):
        raise ConfigError(f"k_max={kmax} leaves no radii at N={cfg.N}, delta={cfg.delta}")
    ks = np.arange(2, kmax + 1)
    M = np.empty((cfg.replicas, ks.size))
    first = None
    for r in range(cfg.replicas):
        s = derive_seed(cfg.seed, r)
        fs = src(s)
        first = fs if first is None else first
        mu = build_measure(fs)
        d = draw_point(mu, derive_seed(s, 1))
        x = d.scaled(cfg.N)
        M[r] = [mu.ball_mass(x, math.exp(-k)) for k in ks]
    return ks, M, first


def run_ball_decay(cfg: ExperimentConfig) -> Outcome:
    ks, M, first = _ball_mass_table(cfg)
    rows = [(r, int(k), float(M[r, c])) for r in range(M.shape[0]) for c, k in enumerate(ks)]
    med = np.median(-np.log(M), axis=0)
    fit = ks >= cfg.k_min
    ok = fit & (med > 0)
    slope = _slope(np.log(ks[ok]), np.log(med[ok])) if ok.sum() >= 2 else float("nan")
    res = {"N": cfg.N, "k": list(map(int, ks)), "median_neg_log_M": list(map(float, med)),
           "fit_k_range": [int(ks[fit][0]), int(ks[fit][-1])] if fit.any() else [],
           "slope": slope, "target_slope": 0.5}
    return Outcome(("replica", "k", "M_k"), rows, res, first)


def run_dichotomy(cfg: ExperimentConfig) -> Outcome:
    ks, M, first = _ball_mass_table(cfg)
    rows, per = [], {}
    fit = ks >= cfg.k_min
    for theta in cfg.thetas:
        g = parametric(theta, cfg.gauge_c)
        phis = np.array([g.phi(math.exp(-k)) for k in ks])
        R = M / phis[None, :]
        med = np.median(R, axis=0)
        for r in range(M.shape[0]):
            for c, k in enumerate(ks):
                rows.append((r, float(theta), int(k), float(M[r, c]), float(phis[c]), float(R[r, c])))
        per[repr(float(theta))] = {
            "theta": float(theta), "divergent": theta <= 1, "phi": list(map(float, phis)),
            "median_R": list(map(float, med)),
            "spearman": _spearman(ks[fit], med[fit]),
            "frac_max_R_above_threshold": float(np.mean(R[:, fit].max(axis=1) > cfg.ratio_threshold)),
        }
    res = {"N": cfg.N, "k": list(map(int, ks)), "fit_k_range": [int(ks[fit][0]), int(ks[fit][-1])],
           "threshold": cfg.ratio_threshold, "gauges": per}
    return Outcome(("replica", "theta", "k", "M_k", "phi", "R_k"), rows, res, first)


# -- spine ----------------------------------------------------------------------------------


def run_spine(cfg: ExperimentConfig) -> Outcome:
    dom = lattice_domain(cfg)
    frame = build_frame(dom, root_site(cfg, dom), cfg.delta)
    op = concentric.spine_operator(frame)
    src = FieldSource(dom, cfg.sampler)
    t = concentric.step_variances(src.green, frame, op)
    n = frame.n
    b = concentric.offsets(frame)
    mn = m_N(cfg.N)
    hat_minus_tilde = ALPHA * (t / t[-1]) * mn - ALPHA * b
    S_all = np.empty((cfg.replicas, n + 1))
    xi_all = np.full((cfg.replicas, n + 1), np.nan)
    K_all = []
    rows = []
    first = None
    if cfg.spine_mode == "walk":
        if not src.spectral:
            raise ConfigError("spine_mode=walk needs the spectral sampler on a rectangle")
        U = concentric.spine_noise_loadings(op)
        for r in range(cfg.replicas):
            z = _rng(derive_seed(cfg.seed, r)).standard_normal(dom.mask.shape).ravel()
            S_all[r] = U @ z
            for k in range(n + 1):
                rows.append((r, k, float(S_all[r, k]), float("nan"), float("nan"), float("nan")))
    else:
        for r in range(cfg.replicas):
            fs = src(derive_seed(cfg.seed, r))
            first = fs if first is None else first
            st = concentric.concentric_stats(fs, build_measure(fs), frame, t, op, cfg.eta, cfg.ell)
            S_all[r] = st.S
            for k, v in st.Xi.items():
                xi_all[r, k] = v
            K_all.append(st.K)
            for k in range(n + 1):
                rows.append((r, k, float(st.S[k]), float(st.S_hat[k]), float(st.S_tilde[k]),
                             float(st.Xi.get(k, float("nan")))))
    var = (ALPHA * S_all).var(axis=0, ddof=1) if cfg.replicas > 1 else np.full(n + 1, np.nan)
    rel = [float(abs(var[k] / t[k] - 1)) if t[k] > 0 else float("nan") for k in range(n + 1)]
    res = {"N": cfg.N, "n": n, "kappa": frame.kappa, "root": list(frame.root), "mode": cfg.spine_mode,
           "t": list(map(float, t)), "t_minus_4k": [float(t[k] - 4 * k) for k in range(n + 1)],
           "mc_var_alpha_S": list(map(float, var)), "mc_rel_error": rel,
           "hat_minus_tilde": list(map(float, hat_minus_tilde)),
           "annulus_sizes": list(map(int, frame.annulus_sizes()))}
    if cfg.spine_mode == "full":
        exceed = {}
        for k in range(1, n + 1):
            col = xi_all[:, k]
            col = col[np.isfinite(col)]
            exceed[str(k)] = float(np.mean(np.abs(col) > k ** cfg.eta)) if col.size else float("nan")
        res["p_abs_xi_exceeds"] = exceed
        res["eta"] = cfg.eta
        res["ell"] = cfg.ell
        res["K_histogram"] = {str(k): int(v) for k, v in zip(*np.unique(K_all, return_counts=True))}
    return Outcome(("replica", "k", "S", "S_hat", "S_tilde", "Xi"), rows, res, first)


# -- Bessel side ----------------------------------------------------------------------------


def run_motoo(cfg: ExperimentConfig) -> Outcome:
    rows, per = [], {}
    for i, theta in enumerate(cfg.thetas):
        g = parametric(theta, cfg.gauge_c)
        fr = bessel.motoo_fractions(g, cfg.horizons, cfg.t_start, cfg.n_paths, derive_seed(cfg.seed, i))
        for T, f in fr.items():
            rows.append((float(theta), float(T), float(f), cfg.n_paths))
        per[repr(float(theta))] = {"theta": float(theta), "divergent": theta <= 1,
                                   "fractions": {repr(T): f for T, f in fr.items()}}
    res = {"t_start": cfg.t_start, "n_paths": cfg.n_paths, "horizons": list(map(float, cfg.horizons)),
           "resolution": {"fine": bessel.FINE_STEP, "coarse": bessel.COARSE_STEP}, "gauges": per}
    return Outcome(("theta", "T", "fraction", "n_paths"), rows, res)


def run_bridge_limit(cfg: ExperimentConfig) -> Outcome:
    rep = bessel.bridge_to_bessel_check(cfg.v, cfg.b, cfg.T_list, cfg.n_paths, derive_seed(cfg.seed, 0),
                                        max_rejects=cfg.max_rejects)
    dom = bessel.domination_check(cfg.dom_v, cfg.dom_horizon, cfg.dom_paths, cfg.dom_step,
                                  derive_seed(cfg.seed, 1))
    rows = [(r["T"], r["acceptance"], r["p_half"], r["p_b"]) for r in rep["rows"]]
    res = {"bridge": rep, "domination": {
        "v": dom.v, "horizon": dom.horizon, "n_paths": dom.n_paths, "step": dom.step,
        "pathwise_violations": dom.pathwise_violations, "max_set_excess": dom.max_set_excess,
        "shifted_end_mean": dom.shifted_end_mean, "shifted_end_se": dom.shifted_end_se, "ok": dom.ok}}
    return Outcome(("T", "acceptance", "p_half", "p_b"), rows, res)


# -- Hausdorff fixtures -----------------------------------------------------------------------


def run_hausdorff_fixture(cfg: ExperimentConfig) -> Outcome:
    rows = []
    sets = {"segment": (hausdorff.segment(), 1.0), "square": (hausdorff.unit_square(), 2.0),
            "cantor_dust": (hausdorff.cantor_dust(cfg.cantor_depth), 2 * math.log(2) / math.log(3))}
    dims = {}
    for name, (s, target) in sets.items():
        d = hausdorff.dim_estimate(s)
        dims[name] = {"estimate": d, "target": target}
        rows.append((name, "dimension", d, target))
    dom = discretize(Rectangle(0, 0, 1, 1), cfg.N)
    mu = lebesgue(dom)
    rng = _rng(derive_seed(cfg.seed, 0))
    pts = rng.uniform(0.2, 0.8, size=(100, 2))
    radii = np.exp(-np.arange(2, max(3, int(math.log(cfg.N)))))  # e^-2 .. e^-(floor(log N) - 1)
    cls = {}
    for s in (2.0, 3.0):
        rep = hausdorff.rogers_taylor_classify(mu, pts, PowerGauge(s), radii, 1.0, 100.0)
        cls[repr(s)] = {"classification": rep.classification.value, "ratio_min": float(rep.ratios.min()),
                        "ratio_max": float(rep.ratios.max())}
        rows.append((f"lebesgue_r^{s:g}", "classification", float(np.median(rep.ratios)), float("nan")))
    res = {"dimensions": dims, "rogers_taylor": cls, "radii": list(map(float, radii)), "N": cfg.N}
    return Outcome(("fixture", "quantity", "value", "target"), rows, res)


# -- conditioned ballot -------------------------------------------------------------------------


def run_conditioned_ballot(cfg: ExperimentConfig) -> Outcome:
    rows, table = [], {}
    idx = 0
    for N in cfg.N_list:
        dom = lattice_domain(cfg, N)
        src = FieldSource(dom, cfg.sampler)
        root = root_site(cfg, dom)
        build_frame(dom, root, cfg.delta)  # validates the root against the delta-interior
        col = src.green.column(root)
        mn = m_N(N)
        sl = math.sqrt(math.log(N))
        for t in cfg.t_grid:
            a = mn - t * sl
            hits = 0
            for _ in range(cfg.replicas):
                fs = condition_field(src(derive_seed(cfg.seed, idx)), src.green, root, a, col)
                hits += int(fs.values.max() <= mn + cfg.u)
                idx += 1
            p = hits / cfg.replicas
            stat = sl * p / (1 + t)
            table[(N, t)] = (p, stat)
            rows.append((N, float(t), float(a), p, stat))
    spread, rho = {}, {}
    for t in cfg.t_grid:
        vals = [table[(N, t)][1] for N in cfg.N_list]
        spread[repr(float(t))] = (max(vals) / min(vals)) if min(vals) > 0 else float("inf")
    for N in cfg.N_list:
        rho[str(N)] = _spearman(cfg.t_grid, [table[(N, t)][0] for t in cfg.t_grid])
    res = {"u": cfg.u, "spread_ratio": spread, "spread_tol": cfg.spread_tol,
           "spread_ok": all(v <= cfg.spread_tol for v in spread.values()), "spearman_in_t": rho}
    return Outcome(("N", "t", "a", "P", "rescaled"), rows, res)


RUNNERS: dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "green-check": run_green_check,
    "field-stats": run_field_stats,
    "max-tail": run_max_tail,
    "near-extremal": run_near_extremal,
    "ball-decay": run_ball_decay,
    "spine": run_spine,
    "motoo": run_motoo,
    "bridge-limit": run_bridge_limit,
    "dichotomy": run_dichotomy,
    "hausdorff-fixture": run_hausdorff_fixture,
    "conditioned-ballot": run_conditioned_ballot,
}
