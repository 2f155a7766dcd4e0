"""
Closed-form rates and interference terms for THP-aided clustered NOMA.

Conventions: ``H1`` and ``H2`` stack the scheduled strong and weak channels
as rows (cluster order = THP encoding order), ``W`` stacks the beams as rows
and ``powers`` is an ``(n_clusters, 2)`` array of ``(p_k1, p_k2)``. All rates
are in bits/s/Hz.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import proj_complement
from .errors import DegenerateGainError

GAIN_FLOOR = 1e-10


@dataclass
class RateReport:
    """Per-cluster rates and interference."""

    strong: np.ndarray
    weak: np.ndarray
    binding: list
    interference: np.ndarray
    interference_bound: np.ndarray = None

    @property
    def sum_strong(self):
        return float(np.sum(self.strong))

    @property
    def sum_weak(self):
        return float(np.sum(self.weak))

    @property
    def sum_total(self):
        return self.sum_strong + self.sum_weak


@dataclass
class BeamPowerSolution:
    """Beams and powers of a complete design.

    ``slack_rates`` are the weak rates the designer certified (lower
    bounds); ``report`` holds every rate re-evaluated with the exact
    interference. ``history`` is the per-iteration objective.
    """

    beams: np.ndarray
    powers: np.ndarray
    slack_rates: np.ndarray
    iterations: int = 0
    history: list = field(default_factory=list)
    report: object = None
    trace: list = field(default_factory=list)

    @property
    def objective(self):
        return float(np.sum(self.slack_rates))


def _ip(a, b):
    """a^H b."""
    return np.vdot(a, b)


def strong_rate(h1, w, p1, noise_var):
    """``log2(1 + p1 |h1^H w|^2 / noise_var)``."""
    return float(np.log2(1.0 + p1 * abs(_ip(h1, w)) ** 2 / noise_var))


def _cluster_powers(powers):
    powers = np.asarray(powers, dtype=float)
    return powers[:, 0], powers[:, 1], powers.sum(axis=1)


def _gain(h1, w, k):
    g = _ip(h1, w)
    if abs(g) < GAIN_FLOOR:
        raise DegenerateGainError(f"|h_k1^H w_k| ~ 0 in cluster {k}")
    return g


def _interference(k, h1, h2, W, p1_k, p_other):
    """Shared three-term interference sum; ``p_other[j]`` weights cluster j."""
    w_k = W[k]
    I = p1_k * abs(_ip(h2, w_k)) ** 2
    if k > 0:
        ratio = _ip(h2, w_k) / _gain(h1, w_k, k)
        for j in range(k):
            I += p_other[j] * abs(_ip(h2, W[j]) - ratio * _ip(h1, W[j])) ** 2
    for j in range(k + 1, len(W)):
        I += p_other[j] * abs(_ip(h2, W[j])) ** 2
    return float(I)


def exact_interference(k, H1, H2, W, powers):
    """Interference seen by the weak user of cluster ``k`` (0-based).

    Intra-cluster term, residual precoded terms from clusters ``j < k`` and
    plain leakage from clusters ``j > k``.
    """
    p1, _, p = _cluster_powers(powers)
    return _interference(k, H1[k], H2[k], np.asarray(W), p1[k], p)


def greedy_interference(k, h2, W_fixed, w_k, estimates, h1, p1_k, total_power, n_clusters):
    """Interference estimate used by the sequential per-cluster design.

    Clusters ``j < k`` use the already designed beams ``W_fixed``, clusters
    ``j > k`` their matched-filter ``estimates`` (rows indexed by cluster, rows
    ``<= k`` are ignored); every other cluster carries ``P / N_c``.
    """
    n_tx = len(w_k)
    W = np.zeros((n_clusters, n_tx), dtype=complex)
    W[:k] = np.asarray(W_fixed)[:k]
    W[k] = w_k
    if k + 1 < n_clusters:
        W[k + 1:] = np.asarray(estimates)[k + 1:]
    p_eq = np.full(n_clusters, total_power / n_clusters)
    return _interference(k, h1, h2, W, p1_k, p_eq)


def interference_upper_bound(k, H1, H2, W, powers):
    """Cauchy-Schwarz bound on :func:`exact_interference`.

    Each ``j < k`` residual term is replaced by
    ``(w_k^H Pi_k w_k)(w_j^H Pi_k w_j) p_j / |h_k1^H w_k|^2`` with
    ``Pi_k = h_k1 h_k1^H + h_k2 h_k2^H``.
    """
    W = np.asarray(W)
    p1, _, p = _cluster_powers(powers)
    return _bound(k, H1[k], H2[k], W, p1[k], p)


def quad_pi(h1, h2, w):
    """``w^H (h1 h1^H + h2 h2^H) w``."""
    return float(abs(_ip(h1, w)) ** 2 + abs(_ip(h2, w)) ** 2)


def _bound(k, h1, h2, W, p1_k, p_other):
    w_k = W[k]
    I = p1_k * abs(_ip(h2, w_k)) ** 2
    if k > 0:
        g = abs(_gain(h1, w_k, k)) ** 2
        a = quad_pi(h1, h2, w_k)
        for j in range(k):
            I += a * quad_pi(h1, h2, W[j]) * p_other[j] / g
    for j in range(k + 1, len(W)):
        I += p_other[j] * abs(_ip(h2, W[j])) ** 2
    return float(I)


def greedy_interference_bound(k, h2, W_fixed, w_k, estimates, h1, p1_k, total_power, n_clusters):
    """Cauchy-Schwarz bound on :func:`greedy_interference`."""
    n_tx = len(w_k)
    W = np.zeros((n_clusters, n_tx), dtype=complex)
    W[:k] = np.asarray(W_fixed)[:k]
    W[k] = w_k
    if k + 1 < n_clusters:
        W[k + 1:] = np.asarray(estimates)[k + 1:]
    p_eq = np.full(n_clusters, total_power / n_clusters)
    return _bound(k, h1, h2, W, p1_k, p_eq)


def weak_sinr_branches(h1, h2, w, p1, p2, interference, noise_var):
    """The two SINRs whose minimum sets the weak-user rate.

    Returns ``(strong_side, weak_side)``: decodability of ``d_k2`` at the
    strong user, and at the weak user itself.
    """
    g1 = abs(_ip(h1, w)) ** 2
    g2 = abs(_ip(h2, w)) ** 2
    strong_side = p2 * g1 / (p1 * g1 + noise_var)
    weak_side = p2 * g2 / (interference + noise_var)
    return strong_side, weak_side


def weak_rate(k, H1, H2, W, powers, noise_var, interference=None):
    """Weak-user rate of cluster ``k`` and the binding branch of the minimum.

    ``interference`` defaults to :func:`exact_interference`; pass the bound
    to get the rate lower bound used by the optimizer.
    """
    powers = np.asarray(powers, dtype=float)
    if interference is None:
        interference = exact_interference(k, H1, H2, W, powers)
    s, w = weak_sinr_branches(H1[k], H2[k], W[k], powers[k, 0], powers[k, 1], interference, noise_var)
    branch = "strong-side" if s <= w else "weak-side"
    return float(np.log2(1.0 + min(s, w))), branch


def nominal_strong_snr(h1, previous_strong, cluster_power, noise_var):
    """``(P/N_c) ||Pi^perp h_k1||^2 / sigma^2`` with the projection onto C^perp(H_1^<k)."""
    r = proj_complement(list(previous_strong), h1)
    return float(cluster_power * np.vdot(r, r).real / noise_var)


def rate_report(H1, H2, W, powers, noise_var, with_bound=False):
    """Evaluate every cluster's rates with the exact interference."""
    powers = np.asarray(powers, dtype=float)
    n_c = len(W)
    strong = np.array([strong_rate(H1[k], W[k], powers[k, 0], noise_var) for k in range(n_c)])
    interference = np.array([exact_interference(k, H1, H2, W, powers) for k in range(n_c)])
    weak, binding = [], []
    for k in range(n_c):
        r, b = weak_rate(k, H1, H2, W, powers, noise_var, interference[k])
        weak.append(r)
        binding.append(b)
    bound = None
    if with_bound:
        bound = np.array([interference_upper_bound(k, H1, H2, W, powers) for k in range(n_c)])
    return RateReport(np.array(strong), np.array(weak), binding, interference, bound)
