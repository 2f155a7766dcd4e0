import numpy as np
import pytest
from hypothesis import given, strategies as st

from thp_noma.rates import (
    exact_interference,
    greedy_interference,
    interference_upper_bound,
    nominal_strong_snr,
    rate_report,
    strong_rate,
    weak_rate,
    weak_sinr_branches,
)
from thp_noma.scheduling import matched_filter_estimates

from conftest import crandn

E = np.eye(2, dtype=complex)


def _oracle_interference(k, H1, H2, W, powers):
    """Second implementation written from the three-term definition with explicit loops."""
    p = powers.sum(axis=1)
    h1, h2 = H1[k], H2[k]
    total = powers[k, 0] * abs(h2.conj() @ W[k]) ** 2
    for j in range(len(W)):
        if j < k:
            r = (h2.conj() @ W[k]) / (h1.conj() @ W[k])
            total += p[j] * abs(h2.conj() @ W[j] - r * (h1.conj() @ W[j])) ** 2
        elif j > k:
            total += p[j] * abs(h2.conj() @ W[j]) ** 2
    return total


def _random_instance(rng, n_c=3, n_t=4):
    H1 = crandn(rng, n_c, n_t)
    H2 = 0.1 * crandn(rng, n_c, n_t)
    W = crandn(rng, n_c, n_t)
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    powers = rng.uniform(0.1, 2.0, (n_c, 2))
    return H1, H2, W, powers


def test_strong_rate_examples(rng):
    assert strong_rate(np.array([1.0]), np.array([1.0]), 3.0, 1.0) == 2.0
    assert strong_rate(np.array([1.0]), np.array([1.0]), 0.0, 1.0) == 0.0
    h, w = crandn(rng, 4), crandn(rng, 4)
    snr = 1.7 * abs(sum(np.conj(h) * w)) ** 2 / 0.3
    assert strong_rate(h, w, 1.7, 0.3) == pytest.approx(np.log(1 + snr) / np.log(2), rel=1e-14)


def test_weak_rate_arithmetic():
    h1 = np.array([1.0 + 0j])
    h2 = np.array([np.sqrt(0.1) + 0j])
    s, w = weak_sinr_branches(h1, h2, np.array([1.0 + 0j]), 1.0, 3.0, 0.0, 1.0)
    assert (s, w) == pytest.approx((1.5, 0.3))
    assert np.log2(1 + min(s, w)) == pytest.approx(0.37851162325372983, abs=1e-12)
    rate, branch = weak_rate(0, h1[None], h2[None], np.array([[1.0 + 0j]]), np.array([[1.0, 0.0]]), 1.0)
    assert rate == 0.0


def test_single_cluster_interference(rng):
    H1, H2, W, powers = _random_instance(rng, 1, 3)
    assert exact_interference(0, H1, H2, W, powers) == pytest.approx(powers[0, 0] * abs(np.vdot(H2[0], W[0])) ** 2)


def test_residual_term_constructed_case():
    # cluster k = 1 with h_k1 = e1, h_k2 = e2, w_k = e1; earlier cluster j = 0 uses w_j = e2 at power 1
    H1 = np.array([E[1], E[0]])
    H2 = np.array([E[0], E[1]])
    W = np.array([E[1], E[0]])
    powers = np.array([[0.5, 0.5], [1.0, 1.0]])
    assert exact_interference(1, H1, H2, W, powers) == pytest.approx(1.0)
    assert interference_upper_bound(1, H1, H2, W, powers) == pytest.approx(1.0)


def test_no_leakage_leaves_intra_term():
    H1 = np.eye(3, dtype=complex)
    H2 = 0.1 * np.eye(3, dtype=complex)
    W = np.eye(3, dtype=complex)
    powers = np.full((3, 2), 0.5)
    for k in range(3):
        assert exact_interference(k, H1, H2, W, powers) == pytest.approx(0.5 * 0.01)


def test_bound_equals_exact_without_earlier_clusters(rng):
    H1, H2, W, powers = _random_instance(rng)
    assert interference_upper_bound(0, H1, H2, W, powers) == exact_interference(0, H1, H2, W, powers)


def test_symmetric_channels_branches(rng):
    h = crandn(rng, 1, 3)
    w = h / np.linalg.norm(h)
    p1, p2 = 0.4, 1.3
    I = exact_interference(0, h, h, w, np.array([[p1, p2]]))
    s, ws = weak_sinr_branches(h[0], h[0], w[0], p1, p2, I, 0.7)
    assert s == pytest.approx(ws, rel=1e-14)


def test_nominal_strong_snr():
    h21 = np.array([1.0, 1.0]) / np.sqrt(2)
    assert nominal_strong_snr(h21, [E[0]], 2.0, 1.0) == pytest.approx(1.0)
    h = np.array([1.0 + 1j, 2.0])
    assert nominal_strong_snr(h, [], 2.0, 0.5) == pytest.approx(2.0 * 6.0 / 0.5)
    assert nominal_strong_snr(E[0] + E[1], [E[0], E[1]], 2.0, 1.0) == pytest.approx(0.0, abs=1e-20)


def test_greedy_interference_matches_exact_at_equal_powers(rng):
    H1, H2, _, _ = _random_instance(rng, 3, 4)
    W = matched_filter_estimates(H1)
    P, n_c = 6.0, 3
    p1 = 0.3 * P / n_c
    powers = np.tile([p1, P / n_c - p1], (n_c, 1))
    k = n_c - 1
    got = greedy_interference(k, H2[k], W[:k], W[k], W, H1[k], p1, P, n_c)
    assert got == pytest.approx(exact_interference(k, H1, H2, W, powers), rel=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_interference_matches_oracle_and_bound(seed):
    rng = np.random.default_rng(seed)
    H1, H2, W, powers = _random_instance(rng)
    for k in range(3):
        I = exact_interference(k, H1, H2, W, powers)
        assert I == pytest.approx(_oracle_interference(k, H1, H2, W, powers), rel=1e-12)
        assert interference_upper_bound(k, H1, H2, W, powers) >= I * (1 - 1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 2 * np.pi))
def test_phase_rotation_invariance(seed, theta):
    rng = np.random.default_rng(seed)
    H1, H2, W, powers = _random_instance(rng)
    a = rate_report(H1, H2, W, powers, 0.5, with_bound=True)
    W2 = W.copy()
    W2[int(rng.integers(0, 3))] *= np.exp(1j * theta)
    b = rate_report(H1, H2, W2, powers, 0.5, with_bound=True)
    assert np.allclose(a.strong, b.strong, rtol=1e-12, atol=1e-14)
    assert np.allclose(a.weak, b.weak, rtol=1e-12, atol=1e-14)
    assert np.allclose(a.interference_bound, b.interference_bound, rtol=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_rate_monotonicity(seed):
    rng = np.random.default_rng(seed)
    H1, H2, W, powers = _random_instance(rng)
    assert strong_rate(H1[0], W[0], 1.0, 1.0) < strong_rate(H1[0], W[0], 1.1, 1.0)
    I = exact_interference(1, H1, H2, W, powers)
    _, lo = weak_sinr_branches(H1[1], H2[1], W[1], 1.0, 0.5, I, 1.0)
    _, hi = weak_sinr_branches(H1[1], H2[1], W[1], 1.0, 0.6, I, 1.0)
    assert hi > lo


def test_report_invariants(rng):
    H1, H2, W, powers = _random_instance(rng)
    rep = rate_report(H1, H2, W, powers, 1.0, with_bound=True)
    assert np.all(rep.strong >= 0) and np.all(rep.weak >= 0)
    for k in range(3):
        s, w = weak_sinr_branches(H1[k], H2[k], W[k], *powers[k], rep.interference[k], 1.0)
        assert rep.weak[k] == pytest.approx(np.log2(1 + min(s, w)))
        assert rep.binding[k] == ("strong-side" if s <= w else "weak-side")
    assert rep.sum_total == pytest.approx(rep.strong.sum() + rep.weak.sum())
