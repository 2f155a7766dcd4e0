import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thp_noma.channel import qr_lower
from thp_noma.errors import AmbiguousDecodeError, DegenerateGainError, PreconditionError
from thp_noma.scheduling import matched_filter_estimates
from thp_noma.thp import (
    make_qam,
    mods,
    mods_array,
    qr_thp_encode,
    receive_strong,
    receive_weak,
    superpose,
    superposition_modulus,
    thp_encode,
)

from conftest import crandn

QAM4 = make_qam(4)
finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_qam4_points_and_modulus():
    # unit energy with the four points at (+-A/4, +-A/4): 2 (A/4)^2 = 1
    assert QAM4.modulus == pytest.approx(2 * np.sqrt(2), abs=1e-15)
    expected = {(sr / np.sqrt(2), si / np.sqrt(2)) for sr in (-1, 1) for si in (-1, 1)}
    got = {(p.real, p.imag) for p in QAM4.points}
    assert len(got) == 4
    for e in expected:
        assert min(np.hypot(e[0] - g[0], e[1] - g[1]) for g in got) < 1e-15
    assert np.mean(np.abs(QAM4.points) ** 2) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("M", [4, 16, 64])
def test_qam_grid(M):
    c = make_qam(M)
    side = int(np.sqrt(M))
    assert len(c.points) == M
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert c.min_distance == pytest.approx(c.modulus / side, rel=1e-12)
    # odd multiples of A / (2 side), strictly inside the half-open box
    units = c.points.real / (c.modulus / (2 * side))
    assert np.allclose(units, np.round(units)) and np.all(np.round(units) % 2 == 1)
    assert np.all(np.abs(c.points.real) < c.modulus / 2) and np.all(np.abs(c.points.imag) < c.modulus / 2)


def test_qam_unsupported():
    with pytest.raises(ValueError):
        make_qam(8)


def test_mods_examples():
    r = mods(3 - 5j, 4)
    assert r.value == -1 - 1j and r.shifts == (-1, 1)
    assert mods(0.3 - 1.2j, 4).value == 0.3 - 1.2j and mods(0.3 - 1.2j, 4).shifts == (0, 0)
    assert mods(2 + 2j, 4).value == -2 - 2j
    assert mods(-2 - 2j, 4).value == -2 - 2j


def test_mods_rejects_nonfinite():
    with pytest.raises(ValueError):
        mods(complex(np.inf, 0), 4)


@given(finite, finite, st.floats(1e-3, 1e3))
def test_mods_reconstruct_and_box(re, im, A):
    x = complex(re, im)
    r = mods(x, A)
    assert -A / 2 <= r.value.real < A / 2 and -A / 2 <= r.value.imag < A / 2
    back = r.reconstruct(A)
    assert abs(back.real - x.real) <= np.spacing(abs(x.real)) + np.spacing(A / 2)
    assert abs(back.imag - x.imag) <= np.spacing(abs(x.imag)) + np.spacing(A / 2)


def test_thp_encode_hand_case():
    h = np.array([[1, 0], [1, 1]], dtype=complex)
    h[1] /= np.sqrt(2)
    W = np.eye(2, dtype=complex)
    xt = thp_encode([0.5, 0.5], W, h, 2 * np.sqrt(2))
    # ratio h_21^H w_1 / h_21^H w_2 = 1, so x~_2 = mods(0.5 - 0.5) = 0
    assert np.allclose(xt, [0.5, 0.0], atol=1e-15)


def test_thp_single_cluster_and_orthogonal(rng):
    h = crandn(rng, 1, 3)
    w = h / np.linalg.norm(h)
    assert thp_encode([0.7 - 0.2j], w, h, 2.0)[0] == 0.7 - 0.2j
    H = np.diag([1.0, 2.0, 0.5]).astype(complex)
    x = np.array([0.3, -0.4j, 0.1 + 0.1j])
    assert np.allclose(thp_encode(x, np.eye(3), H, 2.0), x)


def test_thp_encode_errors():
    H = np.eye(2, dtype=complex)
    with pytest.raises(PreconditionError):
        thp_encode([0, 0], np.array([[1, 0], [1, 1]]) / np.sqrt(2), H, 2.0)
    with pytest.raises(DegenerateGainError):
        thp_encode([0, 0], np.array([[1, 0], [1e-12, 0]]), H, 2.0)


def test_receive_strong_exact_all_pairs():
    p1, p2 = 0.2, 0.8
    B = superposition_modulus(QAM4, p1, p2)
    d1, d2 = np.array(list(itertools.product(range(4), range(4)))).T
    x = superpose(QAM4, d1, d2, p1, p2)
    # oracle: superposed points with different d2 are separated
    far = min(abs(x[i] - x[j]) for i in range(16) for j in range(16) if d2[i] != d2[j])
    assert far > 0.1
    gain = 0.3 - 1.1j
    got2, got1 = receive_strong(gain * x, gain, B, QAM4, p1, p2)
    assert np.array_equal(got2, d2) and np.array_equal(got1, d1)
    shifted2, shifted1 = receive_strong(gain * (x + B + 1j * B), gain, B, QAM4, p1, p2)
    assert np.array_equal(shifted2, d2) and np.array_equal(shifted1, d1)


def test_receive_strong_equal_power_tie():
    # with p1 = p2 the superposed 4-QAM points collide: e.g. (d1, d2) = (a, b) and (b, a)
    d1, d2 = np.array(list(itertools.product(range(4), range(4)))).T
    x = superpose(QAM4, d1, d2, 0.5, 0.5)
    B = superposition_modulus(QAM4, 0.5, 0.5)
    with pytest.raises(AmbiguousDecodeError):
        receive_strong(x, 1.0, B, QAM4, 0.5, 0.5)


def test_receive_weak():
    p1, p2 = 0.2, 0.8
    B = superposition_modulus(QAM4, p1, p2)
    d1, d2 = np.array(list(itertools.product(range(4), range(4)))).T
    x = superpose(QAM4, d1, d2, p1, p2)
    gain = -0.05 + 0.02j
    assert np.array_equal(receive_weak(gain * x, gain, B, QAM4, p1, p2), d2)
    assert np.array_equal(receive_weak(gain * (x + B), gain, B, QAM4, p1, p2), d2)
    with pytest.raises(PreconditionError):
        receive_weak(x, 1.0, B, QAM4, 1.0, 0.0)
    with pytest.raises(DegenerateGainError):
        receive_weak(x, 0.0, B, QAM4, p1, p2)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_thp_cancels_ici(seed, n_c):
    rng = np.random.default_rng(seed)
    n_t = n_c + int(rng.integers(0, 3))
    H1 = crandn(rng, n_c, n_t)
    W = matched_filter_estimates(H1)
    p1 = rng.uniform(0.05, 0.3, n_c)
    p2 = rng.uniform(0.5, 1.0, n_c)
    d1 = rng.integers(0, 4, (50, n_c))
    d2 = rng.integers(0, 4, (50, n_c))
    x = np.column_stack([superpose(QAM4, d1[:, k], d2[:, k], p1[k], p2[k]) for k in range(n_c)])
    B = superposition_modulus(QAM4, p1, p2)
    xt = thp_encode(x, W, H1, B)
    assert np.all(np.abs(xt.real) <= B / 2) and np.all(xt.real < B / 2)
    assert np.all(xt.imag < B / 2) and np.all(xt.imag >= -B / 2)
    y = (xt @ W) @ H1.conj().T
    for k in range(n_c):
        g = np.vdot(H1[k], W[k])
        assert np.max(np.abs(mods_array(y[:, k] / g, B[k])[0] - x[:, k])) <= 1e-9


def test_qr_form_equivalence(rng):
    H = crandn(rng, 4, 3)  # channels as columns
    Q, L = qr_lower(H)
    d = rng.choice(QAM4.points, size=(20, 3))
    A = QAM4.modulus
    ours = thp_encode(d, Q.T, H.T, A)
    textbook = qr_thp_encode(d, L, A)
    assert np.allclose(ours, textbook, atol=1e-12)
    # effective channel H^H Q = L is lower-triangular
    assert np.allclose(H.conj().T @ Q, L, atol=1e-12)
