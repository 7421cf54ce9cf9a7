import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clqg.chaos import ALPHA, annulus_mass, build_measure, m_N
from clqg.concentric import (
    concentric_stats, control_variable, extract_xi, harmonic_extension_at, offsets, spine_noise_loadings,
    spine_operator, spine_walk, spine_walk_dirichlet, step_variances,
)
from clqg.errors import EmptyAnnulus
from clqg.chaos import AtomicMeasure
from clqg.gff import green, injected, sample_spectral, spectral_values
from clqg.lattice import Rectangle, build_frame, discretize


@pytest.fixture(scope="module")
def frame64():
    dom = discretize(Rectangle(0, 0, 1, 1), 64)
    return build_frame(dom, dom.center_site(), 0.4)


@pytest.fixture(scope="module")
def op64(frame64):
    return spine_operator(frame64)


@pytest.fixture(scope="module")
def frame1024():
    dom = discretize(Rectangle(0, 0, 1, 1), 1024)
    fr = build_frame(dom, dom.center_site(), 0.4)
    return fr, spine_operator(fr), green(dom, "spectral")


def test_constant_field(frame64, op64):
    S = spine_walk(injected(frame64.domain, 3.25), frame64, op64)
    assert S[0] == 0.0
    assert np.allclose(S[1:], 3.25, atol=1e-12)


def test_hitting_measures_are_probabilities(op64):
    for k, (_, _, w) in op64.measures.items():
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_ring_against_absorbing_chain(frame64, op64):
    # brute-force first-exit law from the transition matrix of the walk on Delta^k
    k = 3
    box = frame64.box_mask(k)
    ring = np.argwhere(~box & np.pad(box, 1)[2:, 1:-1] | ~box & np.pad(box, 1)[:-2, 1:-1]
                       | ~box & np.pad(box, 1)[1:-1, 2:] | ~box & np.pad(box, 1)[1:-1, :-2])
    inner = np.argwhere(box)
    tid = {tuple(p): i for i, p in enumerate(inner)}
    aid = {tuple(p): i for i, p in enumerate(ring)}
    Q = np.zeros((len(inner), len(inner)))
    R = np.zeros((len(inner), len(ring)))
    for p, i in tid.items():
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = (p[0] + d[0], p[1] + d[1])
            if q in tid:
                Q[i, tid[q]] += 0.25
            else:
                R[i, aid[q]] += 0.25
    B = np.linalg.solve(np.eye(len(inner)) - Q, R)
    root = frame64.domain.to_local(frame64.root)
    expected = B[tid[tuple(root)]]
    ii, jj, w = op64.measures[k]
    got = {(a, b): v for a, b, v in zip(ii, jj, w)}
    for p, idx in aid.items():
        assert got.get(p, 0.0) == pytest.approx(expected[idx], abs=1e-13)


def test_operator_matches_dirichlet(frame64, op64):
    fs = sample_spectral(frame64.domain, 77)
    assert np.allclose(spine_walk(fs, frame64, op64), spine_walk_dirichlet(fs, frame64), atol=1e-10)
    assert spine_walk(fs, frame64, op64)[-1] == fs.at(frame64.root)


def test_harmonic_extension_of_linear_data(frame64):
    # discrete harmonic functions are reproduced exactly
    from clqg.concentric import _submask_domain
    sub = _submask_domain(frame64.domain, frame64.box_mask(2))
    x0, y0 = frame64.root
    v = harmonic_extension_at(sub, lambda x, y: 2.0 * x - y + (x * x - y * y), frame64.root)
    assert v == pytest.approx(2.0 * x0 - y0 + x0 * x0 - y0 * y0, abs=1e-9)


@settings(max_examples=10, deadline=None)
@given(s1=st.integers(0, 2 ** 40), s2=st.integers(0, 2 ** 40), a=st.floats(-3, 3))
def test_walk_is_linear(frame64, op64, s1, s2, a):
    dom = frame64.domain
    h1, h2 = sample_spectral(dom, s1).values, sample_spectral(dom, s2).values
    S = lambda v: spine_walk(injected(dom, v), frame64, op64)
    assert np.allclose(S(h1 + a * h2), S(h1) + a * S(h2), atol=1e-10)


def test_noise_loadings_reproduce_walk(frame64, op64):
    u = spine_noise_loadings(op64)
    z = np.random.default_rng(5).standard_normal(frame64.domain.mask.shape)
    fs = injected(frame64.domain, spectral_values(frame64.domain, z))
    assert np.allclose(u @ z.ravel(), spine_walk(fs, frame64, op64), atol=1e-11)


def test_loadings_norm_equals_step_variance(frame64, op64):
    # Var(alpha S_k) = alpha^2 |u_k|^2 exactly
    g = green(frame64.domain, "spectral")
    t = step_variances(g, frame64, op64)
    var = ALPHA ** 2 * np.sum(spine_noise_loadings(op64) ** 2, axis=1)
    n = frame64.n
    assert np.allclose(var[:n], t[:n], rtol=1e-10)
    # the last step uses G = 1 on the singleton box while S_n is the raw root value
    assert var[n] == pytest.approx(t[n] + ALPHA ** 2, rel=1e-10)


def test_step_variances_monte_carlo(frame64, op64):
    dom = frame64.domain
    t = step_variances(green(dom, "spectral"), frame64, op64)
    walks = np.array([spine_walk(sample_spectral(dom, s), frame64, op64) for s in range(3000)])
    n = frame64.n
    est = (ALPHA * walks[:, 1:n]).var(axis=0, ddof=1)
    # sd of a variance estimate with 3000 normals is about 2.6 %
    assert np.all(np.abs(est / t[1:n] - 1) < 0.1)


def test_step_variances_at_1024(frame1024):
    fr, op, g = frame1024
    t = step_variances(g, fr, op)
    assert t[0] == 0.0
    assert np.all(np.diff(t) > 0)
    assert t[-1] == pytest.approx(ALPHA ** 2 * (g.diag(fr.root) - 1.0))
    k = np.arange(fr.n + 1)
    assert np.all(np.abs(t - 4 * k)[2:fr.n - 1] <= 3)


def test_hat_minus_tilde_bounded(frame1024):
    fr, op, g = frame1024
    t = step_variances(g, fr, op)
    fs = sample_spectral(fr.domain, 3)
    st_ = concentric_stats(fs, build_measure(fs), fr, t, op)
    d = st_.S_hat - st_.S_tilde
    c = 10.0
    for k in range(1, fr.n):
        assert -c <= d[k] <= c * (1 + math.log(min(k, fr.n - k)))


def test_offsets(frame64):
    b = offsets(frame64)
    assert b[0] == 0.0
    assert b[2] == pytest.approx(m_N(64) - m_N(64 * math.exp(-2)))


def test_xi_reconstructs_annulus_mass(frame64, op64):
    fs = sample_spectral(frame64.domain, 21)
    m = build_measure(fs)
    S = spine_walk(fs, frame64, op64)
    N = 64
    for k in range(1, frame64.n + 1):
        xi = extract_xi(m, S, frame64, k)
        back = math.exp(ALPHA * (S[k] - m_N(N) + m_N(N * math.exp(-k))) + xi)
        assert back == pytest.approx(annulus_mass(m, frame64, k), rel=1e-12)


def test_xi_closed_form_for_zero_field(frame64, op64):
    dom = frame64.domain
    fs = injected(dom, 0.0)
    m = build_measure(fs)
    S = spine_walk(fs, frame64, op64)
    sizes = frame64.annulus_sizes()
    for k in range(1, frame64.n + 1):
        expected = math.log(sizes[k] / math.log(64)) - ALPHA * m_N(64 * math.exp(-k))
        assert extract_xi(m, S, frame64, k) == pytest.approx(expected, abs=1e-12)


def test_empty_annulus(frame64):
    m = AtomicMeasure(frame64.domain, np.zeros(frame64.domain.n_sites))
    with pytest.raises(EmptyAnnulus):
        extract_xi(m, np.zeros(frame64.n + 1), frame64, 2)


def test_control_variable_examples():
    n = 12
    assert control_variable({k: 0.5 for k in range(1, n + 1)}, 0.2, 10, n) == 0
    xi = {k: 0.5 for k in range(1, n + 1)}
    xi[5] = 50.0
    assert control_variable(xi, 0.2, 10, n) == 6
    xi = {k: 0.5 for k in range(1, n + 1)}
    xi[10] = 1e6
    assert control_variable(xi, 0.2, 10, n) == min(10, n // 2) + 1


@settings(max_examples=50, deadline=None)
@given(vals=st.lists(st.floats(-3, 3), min_size=8, max_size=8), eta=st.floats(0.01, 0.24))
def test_control_variable_is_minimal(vals, eta):
    n, ell = 8, 6
    xi = dict(enumerate(vals, 1))
    K = control_variable(xi, eta, ell, n)
    ok = lambda K_: all(abs(xi[k]) <= k ** eta for k in range(max(K_, 1), ell + 1))
    if K <= ell and ok(K):
        assert all(not ok(j) for j in range(K))
    else:
        assert K == min(ell, n // 2) + 1
