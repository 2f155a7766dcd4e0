"""
User scheduling: semi-orthogonal selection of the strong users, then weak
users chosen one cluster at a time while each cluster beam is designed
greedily.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import proj_complement
from .errors import DegenerateGainError, PreconditionError, ThpNomaError
from .rates import BeamPowerSolution, greedy_interference, rate_report


@dataclass
class ClusterAssignment:
    """Scheduled clusters in THP encoding order.

    Attributes
    ----------
    strong, weak : ndarray, shape (n_clusters, n_tx)
        Channels ``h_k1`` and ``h_k2`` as rows.
    strong_ids, weak_ids : list of int
        Indices into the strong and weak sets of the population.
    """

    strong: np.ndarray
    weak: np.ndarray
    strong_ids: list
    weak_ids: list

    def __post_init__(self):
        if len(set(self.strong_ids)) != len(self.strong_ids):
            raise ValueError("a strong user is scheduled twice")
        if len(set(self.weak_ids)) != len(self.weak_ids):
            raise ValueError("a weak user is scheduled twice")

    @property
    def n_clusters(self):
        return len(self.strong)

    @property
    def n_tx(self):
        return self.strong.shape[1]

    @classmethod
    def from_channels(cls, strong, weak):
        strong = np.atleast_2d(np.asarray(strong, dtype=complex))
        weak = np.atleast_2d(np.asarray(weak, dtype=complex))
        n = len(strong)
        return cls(strong, weak, list(range(n)), list(range(n)))


@dataclass
class ClusterDesign:
    """Output of a per-cluster beam designer."""

    beam: np.ndarray
    p1: float
    p2: float
    rate: float
    iterations: int = 0
    history: list = field(default_factory=list)


@dataclass
class SchedulerTrace:
    """What the weak-user selection saw at each cluster."""

    candidate_rates: list = field(default_factory=list)
    selected: list = field(default_factory=list)
    estimates: np.ndarray = None
    designs: list = field(default_factory=list)


def sus_select(strong_set, n_clusters, threshold=None):
    """Greedy projected-norm (semi-orthogonal) selection.

    The first user maximizes ``||h||``; each subsequent user maximizes the
    norm of its component orthogonal to the already selected channels. With
    ``threshold`` set, candidates whose normalized correlation with any
    selected channel reaches it are skipped. Ties go to the lowest index.

    Returns
    -------
    list of int
        Selected indices in selection order (the THP encoding order).
    """
    H = np.atleast_2d(np.asarray(strong_set, dtype=complex))
    if len(H) < n_clusters:
        raise PreconditionError(f"need at least {n_clusters} strong users, got {len(H)}")
    selected = []
    for _ in range(n_clusters):
        best, best_norm = None, -1.0
        for i in range(len(H)):
            if i in selected:
                continue
            if threshold is not None and selected:
                corr = np.abs(H[selected].conj() @ H[i]) / (
                    np.linalg.norm(H[selected], axis=1) * np.linalg.norm(H[i])
                )
                if np.any(corr >= threshold):
                    continue
            norm = np.linalg.norm(proj_complement(H[selected], H[i]))
            if norm > best_norm:
                best, best_norm = i, norm
        if best is None:
            raise PreconditionError("semi-orthogonality threshold left no candidates")
        selected.append(best)
    return selected


def matched_filter_estimates(strong_channels):
    """Matched-filter beams under the THP null constraint.

    ``w_k = Pi^perp(H_1^<k) h_k1 / ||.||``; row ``k`` of the result.
    """
    H1 = np.atleast_2d(np.asarray(strong_channels, dtype=complex))
    W = np.empty_like(H1)
    for k in range(len(H1)):
        r = proj_complement(H1[:k], H1[k])
        norm = np.linalg.norm(r)
        if norm <= 1e-12 * max(np.linalg.norm(H1[k]), 1e-300):
            raise DegenerateGainError(f"strong channel {k} lies in the span of the previous ones")
        W[k] = r / norm
    return W


def estimate_ici(g, k, W_fixed, estimates, h1, p1_hat, cluster_power):
    """Estimated interference of weak candidate ``g`` if placed in cluster ``k``.

    Uses the designed beams for clusters ``j < k``, the matched-filter
    estimate for cluster ``k`` itself and for ``j > k``, and equal cluster
    powers.
    """
    n_clusters = len(estimates)
    if abs(np.vdot(h1, estimates[k])) < 1e-10:
        raise DegenerateGainError(f"|h_k1^H w_hat_k| ~ 0 in cluster {k}")
    return greedy_interference(
        k, g, W_fixed, estimates[k], estimates, h1, p1_hat, cluster_power * n_clusters, n_clusters
    )


def candidate_rate(g, k, W_fixed, estimates, h1, config):
    """Estimated weak rate of candidate ``g`` in cluster ``k`` (bits/s/Hz)."""
    pk = config.cluster_power
    p1 = config.eta * pk
    p2 = pk - p1
    I_hat = estimate_ici(g, k, W_fixed, estimates, h1, p1, pk)
    w = estimates[k]
    g1 = abs(np.vdot(h1, w)) ** 2
    g2 = abs(np.vdot(g, w)) ** 2
    sinr = min(p2 * g1 / (p1 * g1 + config.noise_var), p2 * g2 / (I_hat + config.noise_var))
    return float(np.log2(1.0 + sinr))


def schedule(population, config, optimizer, strong_threshold=None):
    """Strong-user selection followed by sequential weak-user selection.

    Parameters
    ----------
    population : UserPopulation
    config : SystemConfig
    optimizer : callable
        ``optimizer(k, strong, weak_channel, W_fixed, estimates, config)``
        returning a :class:`ClusterDesign` for cluster ``k``; normally
        :func:`thp_noma.sca.design_cluster`.

    Returns
    -------
    assignment : ClusterAssignment
    design : BeamPowerSolution
        The sequentially designed beams and powers; ``slack_rates`` are the
        per-cluster rates certified by the optimizer and ``report`` the
        exact-interference rates.
    trace : SchedulerTrace
    """
    n_c = config.n_clusters
    strong_ids = sus_select(population.strong, n_c, strong_threshold)
    H1 = population.strong[strong_ids]
    estimates = matched_filter_estimates(H1)
    remaining = list(range(len(population.weak)))
    if len(remaining) < n_c:
        raise PreconditionError(f"need at least {n_c} weak users, got {len(remaining)}")
    W = np.zeros_like(H1)
    powers = np.zeros((n_c, 2))
    weak_ids = []
    trace = SchedulerTrace(estimates=estimates)
    for k in range(n_c):
        rates = {u: candidate_rate(population.weak[u], k, W, estimates, H1[k], config) for u in remaining}
        best = max(rates.values())
        u_star = min(u for u, r in rates.items() if r == best)
        remaining.remove(u_star)
        weak_ids.append(u_star)
        trace.candidate_rates.append(rates)
        trace.selected.append(u_star)
        try:
            design = optimizer(k, H1, population.weak[u_star], W[:k], estimates, config)
        except ThpNomaError as exc:
            if getattr(exc, "cluster", None) is None:
                exc.cluster = k
            raise
        trace.designs.append(design)
        W[k] = design.beam
        powers[k] = design.p1, design.p2
    assignment = ClusterAssignment(H1.copy(), population.weak[weak_ids].copy(), list(strong_ids), weak_ids)
    design = BeamPowerSolution(
        W, powers,
        np.array([d.rate for d in trace.designs]),
        iterations=sum(d.iterations for d in trace.designs),
        report=rate_report(assignment.strong, assignment.weak, W, powers, config.noise_var),
    )
    return assignment, design, trace
