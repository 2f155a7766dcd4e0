"""
Symbol-level THP for clustered NOMA: square QAM, the symmetric modulo fold,
sequential precoding over clusters and the expanded-constellation receivers.

All routines accept numpy arrays so that many frames can be processed at
once; the leading axis indexes frames and the last axis indexes clusters.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousDecodeError, DegenerateGainError, DimensionError, PreconditionError

#: Relative distance margin under which two candidate centroids are a tie.
TIE_RTOL = 1e-9
#: Tolerance on ``|h_j1^H w_k|`` (j < k) accepted by :func:`thp_encode`.
NULL_TOL = 1e-8
#: Smallest admissible ``|h_k1^H w_k|``.
GAIN_FLOOR = 1e-10


@dataclass(frozen=True)
class Constellation:
    """Unit average energy square QAM.

    Attributes
    ----------
    order : int
        Number of points M.
    points : ndarray of complex
        The M points, row-major over (real level, imaginary level).
    modulus : float
        Modulo factor A; every point sits at an odd multiple of ``A / (2 sqrt(M))``.
    """

    order: int
    points: np.ndarray
    modulus: float

    @property
    def box_half_width(self):
        return self.modulus / 2.0

    @property
    def max_coordinate(self):
        return float(np.max(self.points.real))

    @property
    def min_distance(self):
        d = np.abs(self.points[:, None] - self.points[None, :])
        return float(np.min(d[d > 0]))


@dataclass(frozen=True)
class ModuloResidue:
    """Result of a symmetric modulo fold.

    ``value = input + (shifts[0] + 1j * shifts[1]) * A``.
    """

    value: complex
    shifts: tuple

    def reconstruct(self, A):
        c_r, c_i = self.shifts
        return complex(self.value.real - c_r * A, self.value.imag - c_i * A)


@dataclass(frozen=True)
class SuperposedFrame:
    """Symbols of one or more frames, before and after THP.

    Arrays have shape ``(n_frames, n_clusters)``; ``d1``/``d2`` are indices
    into the constellation.
    """

    d1: np.ndarray
    d2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    x: np.ndarray
    x_tilde: np.ndarray
    B: np.ndarray


def make_qam(M):
    """Square M-QAM scaled to unit average energy (M in {4, 16, 64})."""
    if M not in (4, 16, 64):
        raise ValueError(f"unsupported QAM order {M}; expected 4, 16 or 64")
    side = int(round(np.sqrt(M)))
    levels = 2.0 * np.arange(side) - (side - 1)
    grid = (levels[:, None] + 1j * levels[None, :]).ravel()
    scale = np.sqrt(np.mean(np.abs(grid) ** 2))
    return Constellation(order=M, points=grid / scale, modulus=2.0 * side / scale)


def _fold_real(x, A):
    """Fold real array into [-A/2, A/2); return (value, shift) with value = x + shift*A."""
    n = np.floor(x / A + 0.5)
    value = x - n * A
    # rounding in x - n*A may land exactly on the open edge
    hi = value >= A / 2
    lo = value < -A / 2
    n = n + hi - lo
    value = np.where(hi | lo, x - n * A, value)
    return value, -n.astype(np.int64)


def mods_array(x, A):
    """Vectorized symmetric modulo.

    Returns
    -------
    value : ndarray of complex
        Real and imaginary parts in ``[-A/2, A/2)``.
    c_r, c_i : ndarray of int
        Integer shifts with ``value = x + (c_r + 1j c_i) A``.
    """
    x = np.asarray(x, dtype=complex)
    if not np.all(np.isfinite(x)):
        raise ValueError("mods input must be finite")
    A = np.asarray(A, dtype=float)
    if np.any(A <= 0):
        raise ValueError("modulo factor must be positive")
    re, c_r = _fold_real(x.real, A)
    im, c_i = _fold_real(x.imag, A)
    return re + 1j * im, c_r, c_i


def mods(x, A):
    """Symmetric modulo of a single complex number; see :func:`mods_array`."""
    value, c_r, c_i = mods_array(complex(x), float(A))
    return ModuloResidue(value=complex(value), shifts=(int(c_r), int(c_i)))


def superposition_modulus(const, p1, p2):
    """Modulo factor B for the superposed cluster symbol.

    ``B = (sqrt(p1) + sqrt(p2)) * A``, which keeps every superposed point at
    least a quarter of B away from the edges of the modulo box.
    """
    return (np.sqrt(p1) + np.sqrt(p2)) * const.modulus


def superpose(const, d1, d2, p1, p2):
    """``sqrt(p1) * d1 + sqrt(p2) * d2`` for symbol index arrays ``d1``, ``d2``."""
    pts = const.points
    return np.sqrt(p1) * pts[np.asarray(d1)] + np.sqrt(p2) * pts[np.asarray(d2)]


def _check_beams(beams, strong_channels):
    W = np.atleast_2d(np.asarray(beams, dtype=complex))
    H1 = np.atleast_2d(np.asarray(strong_channels, dtype=complex))
    if W.shape != H1.shape:
        raise DimensionError(f"beams {W.shape} and strong channels {H1.shape} differ in shape")
    # G[k, j] = h_k1^H w_j
    G = H1.conj() @ W.T
    n_c = G.shape[0]
    for k in range(n_c):
        if abs(G[k, k]) < GAIN_FLOOR:
            raise DegenerateGainError(f"|h_k1^H w_k| ~ 0 for cluster {k}")
        leak = np.linalg.norm(G[:k, k])
        if leak > NULL_TOL:
            raise PreconditionError(
                f"beam {k} violates the THP null constraint: ||(H_1^<k)^H w_k|| = {leak:.3e}"
            )
    return G


def thp_encode(cluster_symbols, beams, strong_channels, B):
    """Sequential THP over clusters.

    Parameters
    ----------
    cluster_symbols : array_like, shape (n_clusters,) or (n_frames, n_clusters)
        Superposed symbols x_k.
    beams, strong_channels : array_like, shape (n_clusters, n_tx)
        Beam ``w_k`` and strong-user channel ``h_k1`` per row, in encoding order.
    B : float or array_like of shape (n_clusters,)
        Modulo factor (per cluster if an array).

    Returns
    -------
    ndarray
        Precoded symbols with the same shape as ``cluster_symbols``.
    """
    x = np.asarray(cluster_symbols, dtype=complex)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    G = _check_beams(beams, strong_channels)
    n_c = G.shape[0]
    if x.shape[1] != n_c:
        raise DimensionError(f"expected {n_c} clusters, got {x.shape[1]}")
    B = np.broadcast_to(np.asarray(B, dtype=float), (n_c,))
    xt = np.empty_like(x)
    xt[:, 0] = x[:, 0]
    for k in range(1, n_c):
        coeffs = G[k, :k] / G[k, k]
        xt[:, k] = mods_array(x[:, k] - xt[:, :k] @ coeffs, B[k])[0]
    return xt[0] if squeeze else xt


def qr_thp_encode(data_symbols, L, A):
    """Textbook THP recursion with the lower-triangular effective channel ``L``."""
    d = np.atleast_2d(np.asarray(data_symbols, dtype=complex))
    L = np.asarray(L, dtype=complex)
    s = np.empty_like(d)
    s[:, 0] = d[:, 0]
    for k in range(1, L.shape[0]):
        s[:, k] = mods_array(d[:, k] - s[:, :k] @ (L[k, :k] / L[k, k]), A)[0]
    return s


def modular_distance(z, centroids, B):
    """``|mods_B(z - c)|`` for every pair; shape ``z.shape + (len(centroids),)``."""
    diff = np.asarray(z, dtype=complex)[..., None] - np.asarray(centroids)[None, :]
    return np.abs(mods_array(diff, B)[0])


def _nearest(z, centroids, labels, B):
    """Index of the nearest centroid label, raising on equidistant different labels."""
    dist = modular_distance(z, centroids, B)
    best = np.argmin(dist, axis=-1)
    dmin = np.take_along_axis(dist, best[:, None], axis=-1)[:, 0]
    close = dist <= dmin[:, None] + TIE_RTOL * B
    lab = np.broadcast_to(labels, dist.shape)
    tie = np.any(close & (lab != labels[best][:, None]), axis=-1)
    if np.any(tie):
        raise AmbiguousDecodeError(
            f"{int(np.sum(tie))} sample(s) are equidistant from centroids with different labels"
        )
    return labels[best]


def _normalize(y, gain, B):
    gain = complex(gain)
    if abs(gain) < GAIN_FLOOR:
        raise DegenerateGainError("effective gain is ~0")
    return mods_array(np.atleast_1d(np.asarray(y, dtype=complex)) / gain, B)[0]


def receive_strong(y, gain, B, const, p1, p2):
    """SIC receiver of the strong user.

    Normalizes by the effective gain, folds into the modulo box, decodes the
    weak symbol against the superposed constellation, cancels it and decodes
    the strong symbol.

    Returns
    -------
    d2_hat, d1_hat : ndarray of int
        Constellation indices.

    Raises
    ------
    AmbiguousDecodeError
        If a sample is equidistant from superposed points carrying different
        weak-user symbols (e.g. ``p1 == p2`` with 4-QAM).
    """
    z = _normalize(y, gain, B)
    M = const.order
    d1_grid, d2_grid = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
    centroids = superpose(const, d1_grid.ravel(), d2_grid.ravel(), p1, p2)
    d2_hat = _nearest(z, centroids, d2_grid.ravel(), B)
    residual = z - np.sqrt(p2) * const.points[d2_hat]
    d1_hat = _nearest(residual, np.sqrt(p1) * const.points, np.arange(M), B)
    return d2_hat, d1_hat


def receive_weak(y, gain, B, const, p1, p2):
    """Weak-user receiver: decode ``d2`` treating the strong component as noise."""
    if p2 <= 0:
        raise PreconditionError("weak-user power is zero; nothing to decode")
    z = _normalize(y, gain, B)
    return _nearest(z, np.sqrt(p2) * const.points, np.arange(const.order), B)
