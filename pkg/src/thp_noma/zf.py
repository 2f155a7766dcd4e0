"""
Zero-forcing inter-cluster beamforming with NOMA inside each cluster.

Every beam lies in the orthogonal complement of all other strong channels,
so strong users see no inter-cluster interference without any precoding.
"""

from dataclasses import dataclass

import numpy as np

from .channel import complement_basis
from .errors import DecompositionError
from .rates import rate_report

NULL_TOL = 1e-8


@dataclass
class ZfSolution:
    """ZF beams, the ``eta`` power split and the resulting rates."""

    beams: np.ndarray
    powers: np.ndarray
    report: object

    @property
    def slack_rates(self):
        return self.report.weak


def zf_beams(strong_channels):
    """Unit-norm ZF beams, one per row.

    ``w_k`` is the normalized projection of ``h_k1`` onto the orthogonal
    complement of the other strong channels.

    Raises
    ------
    DecompositionError
        If ``N_c > N_t`` or ``h_k1`` has no component outside the span of
        the others.
    """
    H1 = np.atleast_2d(np.asarray(strong_channels, dtype=complex))
    n_c, n_t = H1.shape
    if n_c > n_t:
        raise DecompositionError(f"ZF needs N_c <= N_t, got N_c={n_c}, N_t={n_t}")
    W = np.empty_like(H1)
    for k in range(n_c):
        Q = complement_basis(np.delete(H1, k, axis=0), n_t)
        w = Q @ (Q.conj().T @ H1[k])
        norm = np.linalg.norm(w)
        if norm <= 1e-10 * np.linalg.norm(H1[k]):
            raise DecompositionError(f"strong channel {k} lies in the span of the other strong channels")
        W[k] = w / norm
    return W


def zf_noma_rates(assignment, config):
    """ZF beams with equal cluster power split as ``eta`` / ``1 - eta``.

    Rates are evaluated with the exact interference of the THP receiver
    model; with ZF beams the residual terms from earlier clusters reduce to
    plain leakage because ``h_k1^H w_j = 0``.
    """
    W = zf_beams(assignment.strong)
    pk = config.cluster_power
    powers = np.tile([config.eta * pk, (1 - config.eta) * pk], (len(W), 1))
    report = rate_report(assignment.strong, assignment.weak, W, powers, config.noise_var)
    return ZfSolution(W, powers, report)
