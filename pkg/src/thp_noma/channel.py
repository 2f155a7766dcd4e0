"""
Channel populations and the complex linear-algebra helpers used by every
other module.

Channel vectors are ``complex128`` numpy arrays (interleaved re/im float64 in
memory). Collections of channels are stacked as rows of a 2-D array, so
``H[k]`` is the channel of user ``k`` and ``np.vdot(H[k], w)`` is
:math:`h_k^H w`.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DecompositionError, DimensionError

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SystemConfig:
    """Downlink system parameters.

    Parameters
    ----------
    n_tx : int
        Number of BS transmit antennas.
    n_clusters : int
        Number of two-user clusters, ``1 <= n_clusters <= n_tx``.
    total_power : float
        Total transmit power P (linear).
    noise_var : float
        AWGN variance (linear).
    eta : float
        Fraction of the nominal maximum strong-user SNR that is enforced,
        ``0 < eta <= 1``.
    strong_var, weak_var : float
        Per-entry variance of strong-set and weak-set channels.
    pop_per_set : int
        Number of users in each of the strong and weak sets.
    """

    n_tx: int = 4
    n_clusters: int = 4
    total_power: float = 10 ** 1.5
    noise_var: float = 1.0
    eta: float = 0.3
    strong_var: float = 1.0
    weak_var: float = 0.01
    pop_per_set: int = 20

    def __post_init__(self):
        if int(self.n_tx) != self.n_tx or self.n_tx < 1:
            raise ConfigurationError(f"n_tx must be a positive integer, got {self.n_tx!r}")
        if int(self.n_clusters) != self.n_clusters or not 1 <= self.n_clusters <= self.n_tx:
            raise ConfigurationError(
                f"n_clusters must be an integer in [1, n_tx={self.n_tx}], got {self.n_clusters!r}"
            )
        for name in ("total_power", "noise_var", "eta", "strong_var", "weak_var"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ConfigurationError(f"{name} must be finite, got {value!r}")
        if self.total_power <= 0:
            raise ConfigurationError("total_power must be > 0")
        if self.noise_var <= 0:
            raise ConfigurationError("noise_var must be > 0")
        if not 0 < self.eta <= 1:
            raise ConfigurationError(f"eta must lie in (0, 1], got {self.eta}")
        if not self.strong_var > self.weak_var > 0:
            raise ConfigurationError(
                "channel variances must satisfy strong_var > weak_var > 0, "
                f"got strong_var={self.strong_var}, weak_var={self.weak_var}"
            )
        if int(self.pop_per_set) != self.pop_per_set or self.pop_per_set < 1:
            raise ConfigurationError("pop_per_set must be a positive integer")

    @property
    def cluster_power(self):
        """Equal per-cluster power budget P / N_c."""
        return self.total_power / self.n_clusters

    def with_snr_db(self, snr_db):
        """Copy of the configuration with ``P = noise_var * 10**(snr_db/10)``."""
        return replace(self, total_power=self.noise_var * 10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class UserPopulation:
    """Strong-set and weak-set channels, one user per row."""

    strong: np.ndarray
    weak: np.ndarray
    seed: int

    def __post_init__(self):
        if self.strong.shape != self.weak.shape:
            raise DimensionError("strong and weak sets must have the same size and antenna count")


def circular_gaussian(rng, shape, variance):
    """Draw i.i.d. CN(0, variance) entries."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_population(config, seed):
    """Draw a user population with i.i.d. circular Gaussian channels.

    The strong set is drawn before the weak set from a single
    ``numpy.random.default_rng(seed)`` stream, so the result is a pure
    function of ``(config, seed)``.
    """
    if not isinstance(config, SystemConfig):
        raise ConfigurationError("config must be a SystemConfig")
    rng = np.random.default_rng(seed)
    shape = (config.pop_per_set, config.n_tx)
    strong = circular_gaussian(rng, shape, config.strong_var)
    weak = circular_gaussian(rng, shape, config.weak_var)
    return UserPopulation(strong=strong, weak=weak, seed=seed)


def _as_columns(vectors, n=None):
    """Stack a sequence of vectors as the columns of an ``n x m`` matrix."""
    vectors = [np.asarray(v, dtype=complex).ravel() for v in vectors]
    if not vectors:
        if n is None:
            raise DimensionError("cannot infer dimension of an empty basis")
        return np.zeros((n, 0), dtype=complex)
    lengths = {len(v) for v in vectors}
    if len(lengths) != 1 or (n is not None and lengths != {n}):
        raise DimensionError(f"vector lengths {sorted(lengths)} do not match dimension {n}")
    return np.column_stack(vectors)


def numerical_rank(M):
    """Rank of ``M`` with singular values below ``1e-10 * s_max`` treated as zero."""
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def span_basis(vectors, n):
    """Orthonormal basis (columns) of the span of ``vectors`` in C^n."""
    M = _as_columns(vectors, n)
    r = numerical_rank(M)
    if r == 0:
        return np.zeros((n, 0), dtype=complex)
    Q, _, _ = scipy.linalg.qr(M, mode="full", pivoting=True)
    return Q[:, :r]


def complement_basis(vectors, n):
    """Orthonormal basis of the orthogonal complement of ``span(vectors)``.

    Uses a column-pivoted Householder QR; the number of returned columns is
    ``n - rank``.

    Parameters
    ----------
    vectors : sequence of array_like
        Vectors of length ``n``; may be empty.
    n : int
        Ambient dimension.

    Returns
    -------
    ndarray, shape (n, n - rank)
    """
    M = _as_columns(vectors, n)
    r = numerical_rank(M)
    if r == 0:
        return np.eye(n, dtype=complex)
    Q, _, _ = scipy.linalg.qr(M, mode="full", pivoting=True)
    return Q[:, r:]


def proj_complement(basis, v):
    """Component of ``v`` orthogonal to ``span(basis)``.

    An empty ``basis`` returns ``v`` unchanged (as a complex copy).
    """
    v = np.asarray(v, dtype=complex).ravel()
    Q = span_basis(basis, len(v))
    if Q.shape[1] == 0:
        return v.copy()
    return v - Q @ (Q.conj().T @ v)


def proj_span(basis, v):
    """Component of ``v`` inside ``span(basis)``."""
    v = np.asarray(v, dtype=complex).ravel()
    return v - proj_complement(basis, v)


def qr_lower(H):
    """Factor ``H = Q L^H`` with ``L`` lower-triangular.

    ``H`` holds the channels as columns (``N_t x N_c``). The diagonal of
    ``L`` is made real and positive so the factorization is unique.

    Raises
    ------
    DecompositionError
        If ``H`` is rank deficient or wide.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise DimensionError("H must be a 2-D matrix")
    n_t, n_c = H.shape
    if n_c > n_t:
        raise DecompositionError(f"need N_t >= N_c, got {n_t} x {n_c}")
    if numerical_rank(H) < n_c:
        raise DecompositionError("H is rank deficient")
    Q, R = np.linalg.qr(H, mode="reduced")
    d = np.diag(R)
    phase = d / np.abs(d)
    Q = Q * phase
    R = phase.conj()[:, None] * R
    return Q, R.conj().T
