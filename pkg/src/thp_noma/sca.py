"""
Successive convex approximation for the THP-NOMA beam and power design.

Each non-convex rate constraint is rewritten with log-domain slack variables
as ``sum of exponentials <= convex function`` and the right-hand side is
replaced by its first-order Taylor expansion at the current point. The
resulting subproblem is an exponential/second-order cone program solved by
:mod:`thp_noma.conic`. Complex beams are lifted to ``w = u + i v``.

Interference in the weak-user rate is replaced by its Cauchy-Schwarz upper
bound, so the optimized objective is a lower bound on the weak sum rate.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import proj_complement
from .conic import ProgramBuilder, solve
from .errors import DegenerateInitializationError, InfeasibleError, SolverError
from .rates import (
    BeamPowerSolution,
    greedy_interference_bound,
    interference_upper_bound,
    quad_pi,
    rate_report,
    weak_sinr_branches,
)
from .scheduling import ClusterDesign, matched_filter_estimates

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
#: Log arguments below this raise :class:`DegenerateInitializationError`.
LOG_FLOOR = 1e-30
#: Half-width (in nats) of the trust box around each log-domain slack.
SLACK_BOX = 20.0
#: Largest slack magnitude whose exponential is comfortably representable.
SLACK_LIMIT = 700.0
#: Weak-user powers are kept above this fraction of P; lets unused clusters
#: settle instead of driving their power slack towards -inf.
POWER_FLOOR = 1e-9


def taylor_exp(x, x_bar):
    """First-order expansion of ``exp`` at ``x_bar``: ``e^x_bar (1 + x - x_bar)``."""
    return np.exp(x_bar) * (1.0 + np.asarray(x) - x_bar)


def taylor_quad(c, d, d_bar):
    """First-order expansion of ``|c^H d|^2`` at ``d_bar`` (affine in ``d``)."""
    a = np.vdot(c, d_bar)
    return float(abs(a) ** 2 + 2.0 * np.real(np.conj(a) * np.vdot(c, np.asarray(d) - d_bar)))


def _safe_log(value, what):
    if not value > LOG_FLOOR:
        raise DegenerateInitializationError(f"cannot initialize {what}: log of {value:.3e}")
    return float(np.log(value))


@dataclass
class ScaConfig:
    """NOVA iteration settings.

    Parameters
    ----------
    step : float
        Step size ``gamma`` in (0, 1].
    tol : float
        Stop once the objective improves by less than this (bits/s/Hz).
    max_iter : int
        Iteration cap.
    sub_tol : float
        Primal and dual residual required from every conic subproblem.
    gap_tol : float
        Relative duality gap required from every conic subproblem; it bounds
        how far one iteration can fall short of the previous objective.
    slack_box : float
        Trust box half-width on the log-domain slacks.
    """

    step: float = 1.0
    tol: float = 1e-4
    max_iter: int = 100
    sub_tol: float = 1e-8
    gap_tol: float = 1e-7
    slack_box: float = SLACK_BOX

    def __post_init__(self):
        if not 0 < self.step <= 1:
            raise ValueError(f"step must lie in (0, 1], got {self.step}")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if not self.sub_tol > 0 or not self.gap_tol > 0:
            raise ValueError("sub_tol and gap_tol must be > 0")
        if not self.slack_box > 0:
            raise ValueError("slack_box must be > 0")


@dataclass
class ScaPoint:
    """Expansion point of the joint problem.

    Attributes
    ----------
    beams : ndarray, shape (n_clusters, n_tx)
    m : ndarray, shape (n_clusters, 3)
        Slacks for ``|h_k1^H w_k|^2``, ``|h_k2^H w_k|^2`` and ``w_k^H Pi_k w_k``.
    l : ndarray, shape (n_clusters, 4)
        Power slacks (two for ``p_k1``, one for ``p_k2``, one for ``p_k``).
    n : ndarray, shape (n_clusters, n_clusters)
        Cross slacks ``n[k, j]``, ``j != k``; the diagonal is unused (nan).
    powers : ndarray, shape (n_clusters, 2)
    rates : ndarray, shape (n_clusters,)
        Weak-user rate slacks feasible together with the other fields.
    """

    beams: np.ndarray
    m: np.ndarray
    l: np.ndarray
    n: np.ndarray
    powers: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        off = ~np.eye(len(self.n), dtype=bool)
        for name, arr in (("m", self.m), ("l", self.l), ("n", self.n[off])):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"slack {name} is not finite")
            if np.any(np.abs(arr) > SLACK_LIMIT):
                raise ValueError(f"slack {name} outside the representable range")

    def blend(self, other, step):
        """``self + step * (other - self)``, field by field."""
        if step == 1.0:
            return other
        mix = lambda a, b: a + step * (b - a)
        return ScaPoint(*(mix(getattr(self, f), getattr(other, f))
                          for f in ("beams", "m", "l", "n", "powers", "rates")))


@dataclass
class ClusterPoint:
    """Expansion point of the per-cluster problem."""

    beam: np.ndarray
    m: np.ndarray
    l: np.ndarray
    powers: np.ndarray
    rate: float

    def blend(self, other, step):
        if step == 1.0:
            return other
        mix = lambda a, b: a + step * (b - a)
        return ClusterPoint(mix(self.beam, other.beam), mix(self.m, other.m), mix(self.l, other.l),
                            mix(self.powers, other.powers), mix(self.rate, other.rate))


@dataclass
class ScaProgram:
    """A conic subproblem with the bookkeeping needed to read it back.

    ``aux`` maps each auxiliary epigraph variable to the exponent whose
    exponential it bounds.
    """

    program: object
    index: dict
    aux: dict
    n_clusters: int
    n_tx: int

    @property
    def n_decision(self):
        """Number of named (non-auxiliary) real decision variables."""
        return sum(1 for name in self.program.names if not name.startswith("aux"))

    def get(self, x, name):
        return float(x[self.index[name]])

    def beam(self, x, k):
        u = np.array([self.get(x, f"w_re[{k},{i}]") for i in range(self.n_tx)])
        v = np.array([self.get(x, f"w_im[{k},{i}]") for i in range(self.n_tx)])
        return u + 1j * v


class _Lifted:
    """Builder helper holding the real-lifted beam variables."""

    def __init__(self, builder):
        self.b = builder
        self.u = {}
        self.v = {}
        self.aux = {}
        self._n_aux = 0

    def beam(self, k, n_tx):
        self.u[k] = [self.b.var(f"w_re[{k},{i}]") for i in range(n_tx)]
        self.v[k] = [self.b.var(f"w_im[{k},{i}]") for i in range(n_tx)]

    def inner(self, c, k):
        """Real and imaginary parts of ``c^H w_k`` as affine expressions."""
        re = sum(cr * u + ci * v for cr, ci, u, v in zip(c.real, c.imag, self.u[k], self.v[k]))
        im = sum(cr * v - ci * u for cr, ci, u, v in zip(c.real, c.imag, self.u[k], self.v[k]))
        return re, im

    def quad_minorant(self, c, k, w_bar):
        """``g_c(w_k, w_bar)`` as an affine expression."""
        a = np.vdot(c, w_bar)
        re, im = self.inner(c, k)
        return 2.0 * (a.real * re + a.imag * im) - abs(a) ** 2

    def exp_sum_le(self, exponents, rhs, tag):
        """``sum_i exp(exponents[i]) <= rhs`` through epigraph variables."""
        total = 0.0
        for e in exponents:
            t = self.b.var(f"aux_{tag}[{self._n_aux}]")
            self.aux[len(self.b.names) - 1] = e
            self._n_aux += 1
            self.b.exp_le(e, t)
            total = total + t
        self.b.le(total, rhs)

    def null(self, channels, k):
        for h in channels:
            re, im = self.inner(h, k)
            self.b.eq(re)
            self.b.eq(im)

    def unit_ball(self, k):
        self.b.soc(1.0, [*self.u[k], *self.v[k]])


def _f(expr, bar):
    """Affine Taylor minorant ``f(expr, bar)``."""
    return np.exp(bar) * (1.0 + expr - bar)


def _box(builder, var, center, width):
    builder.le(var, center + width)
    builder.ge(var, center - width)


def strong_snr_target(k, strong, config):
    """``eta (P/N_c) ||Pi^perp h_k1||^2`` with the projection onto C^perp(H_1^<k)."""
    r = proj_complement(list(strong[:k]), strong[k])
    return float(config.eta * config.cluster_power * np.vdot(r, r).real)


# --------------------------------------------------------------------------
# joint problem
# --------------------------------------------------------------------------

def build_p1(point, assignment, config, slack_box=SLACK_BOX):
    """Convex approximation of the joint design problem at ``point``.

    Returns
    -------
    ScaProgram
        Minimizes ``-sum_k R_k2``.
    """
    H1, H2 = assignment.strong, assignment.weak
    n_c, n_t = H1.shape
    sigma2 = config.noise_var
    ln_s2 = np.log(sigma2)
    b = ProgramBuilder()
    L = _Lifted(b)
    R, p1, p2, m, l, n = {}, {}, {}, {}, {}, {}
    for k in range(n_c):
        L.beam(k, n_t)
        R[k] = b.var(f"R[{k}]")
        p1[k] = b.var(f"p1[{k}]")
        p2[k] = b.var(f"p2[{k}]")
        m[k] = [b.var(f"m{q + 1}[{k}]") for q in range(3)]
        l[k] = [b.var(f"l{q + 1}[{k}]") for q in range(4)]
        for j in range(n_c):
            if j != k:
                n[k, j] = b.var(f"n[{k},{j}]")
    mb, lb, nb, Wb = point.m, point.l, point.n, point.beams

    for k in range(n_c):
        h1, h2 = H1[k], H2[k]
        Rl = R[k] * LN2
        m1, m2, m3 = m[k]
        l1, l2, l3, l4 = l[k]
        # strong-user SNR target
        b.ge(_f(l1 + m1, lb[k, 0] + mb[k, 0]), strong_snr_target(k, H1, config))
        b.exp_le(l1, p1[k])
        b.exp_le(m1, L.quad_minorant(h1, k, Wb[k]))
        b.exp_le(m2, L.quad_minorant(h2, k, Wb[k]))
        # weak symbol decodable at the strong user
        L.exp_sum_le(
            [Rl + l2 + m1, Rl + ln_s2],
            sigma2 + _f(l2 + m1, lb[k, 1] + mb[k, 0]) + _f(l3 + m1, lb[k, 2] + mb[k, 0]),
            f"strong{k}",
        )
        b.ge(_f(l2, lb[k, 1]), p1[k])
        b.exp_le(l3, p2[k])
        # weak symbol decodable at the weak user, interference bounded
        lhs = [Rl + l2 + m2, Rl + ln_s2]
        rhs = sigma2 + _f(l2 + m2, lb[k, 1] + mb[k, 1]) + _f(l3 + m2, lb[k, 2] + mb[k, 1])
        for j in range(n_c):
            if j < k:
                e = m3 - m1 + l[j][3] + n[k, j]
                e_bar = mb[k, 2] - mb[k, 0] + lb[j, 3] + nb[k, j]
            elif j > k:
                e = l[j][3] + n[k, j]
                e_bar = lb[j, 3] + nb[k, j]
            else:
                continue
            lhs.append(Rl + e)
            rhs = rhs + _f(e, e_bar)
        L.exp_sum_le(lhs, rhs, f"weak{k}")
        # quadratic <= linearized exponential
        b.rsoc_square([*L.inner(h1, k), *L.inner(h2, k)], _f(m3, mb[k, 2]))
        b.ge(_f(l4, lb[k, 3]), p1[k] + p2[k])
        for j in range(n_c):
            if j < k:
                b.rsoc_square([*L.inner(h1, j), *L.inner(h2, j)], _f(n[k, j], nb[k, j]))
            elif j > k:
                b.rsoc_square([*L.inner(h2, j)], _f(n[k, j], nb[k, j]))
        L.null(H1[:k], k)
        L.unit_ball(k)
        b.ge(l3, np.log(POWER_FLOOR * config.total_power))
        # slacks that no other constraint bounds from above
        if k == 0:
            b.le(m3, mb[k, 2] + slack_box)
        if n_c == 1:
            b.le(l4, lb[k, 3] + slack_box)
    b.le(sum(p1[k] + p2[k] for k in range(n_c)), config.total_power)
    program = b.build(-sum(R[k] for k in range(n_c)))
    index = {name: i for i, name in enumerate(program.names)}
    return ScaProgram(program, index, L.aux, n_c, n_t)


def init_alpha(assignment, config, beams=None, powers=None):
    """Expansion point with every slack tight.

    Defaults to the matched-filter beams and the ``eta`` power split;
    ``beams``/``powers`` override them (e.g. with the greedy design).
    The rate slacks are the closed-form bound rates at that point.
    """
    H1, H2 = assignment.strong, assignment.weak
    n_c = len(H1)
    W = matched_filter_estimates(H1) if beams is None else np.asarray(beams, dtype=complex)
    if powers is None:
        pk = config.cluster_power
        powers = np.tile([config.eta * pk, (1 - config.eta) * pk], (n_c, 1))
    powers = np.asarray(powers, dtype=float)
    m = np.empty((n_c, 3))
    l = np.empty((n_c, 4))
    n = np.full((n_c, n_c), np.nan)
    for k in range(n_c):
        h1, h2 = H1[k], H2[k]
        m[k, 0] = _safe_log(abs(np.vdot(h1, W[k])) ** 2, f"m1[{k}]")
        m[k, 1] = _safe_log(abs(np.vdot(h2, W[k])) ** 2, f"m2[{k}]")
        m[k, 2] = _safe_log(quad_pi(h1, h2, W[k]), f"m3[{k}]")
        l[k, 0] = l[k, 1] = _safe_log(powers[k, 0], f"l1[{k}]")
        l[k, 2] = _safe_log(powers[k, 1], f"l3[{k}]")
        l[k, 3] = _safe_log(powers[k].sum(), f"l4[{k}]")
        for j in range(n_c):
            if j < k:
                n[k, j] = _safe_log(quad_pi(h1, h2, W[j]), f"n[{k},{j}]")
            elif j > k:
                n[k, j] = _safe_log(abs(np.vdot(h2, W[j])) ** 2, f"n[{k},{j}]")
    rates = bound_rates(assignment, config, W, powers)
    return ScaPoint(W, m, l, n, powers, rates)


def bound_rates(assignment, config, beams, powers):
    """Weak rates with the Cauchy-Schwarz interference bound (the optimized objective)."""
    H1, H2 = assignment.strong, assignment.weak
    out = np.empty(len(H1))
    for k in range(len(H1)):
        I_bar = interference_upper_bound(k, H1, H2, beams, powers)
        s, w = weak_sinr_branches(H1[k], H2[k], beams[k], powers[k, 0], powers[k, 1], I_bar, config.noise_var)
        out[k] = np.log2(1.0 + min(s, w))
    return out


def _clean_beam(w, previous_strong):
    w = proj_complement(list(previous_strong), w) if len(previous_strong) else w
    norm = np.linalg.norm(w)
    return w / norm if norm > 1.0 else w


def _point_from_solution(sp, x, H1):
    n_c = sp.n_clusters
    beams = np.array([_clean_beam(sp.beam(x, k), H1[:k]) for k in range(n_c)])
    m = np.array([[sp.get(x, f"m{q + 1}[{k}]") for q in range(3)] for k in range(n_c)])
    l = np.array([[sp.get(x, f"l{q + 1}[{k}]") for q in range(4)] for k in range(n_c)])
    n = np.full((n_c, n_c), np.nan)
    for k in range(n_c):
        for j in range(n_c):
            if j != k:
                n[k, j] = sp.get(x, f"n[{k},{j}]")
    powers = np.array([[max(sp.get(x, f"p1[{k}]"), 0.0), max(sp.get(x, f"p2[{k}]"), 0.0)] for k in range(n_c)])
    rates = np.array([sp.get(x, f"R[{k}]") for k in range(n_c)])
    return ScaPoint(beams, m, l, n, powers, rates)


def point_to_vector(sp, point):
    """Place ``point`` in the variable vector of ``sp`` (auxiliaries tight)."""
    x = np.zeros(sp.program.n_variables)
    for k in range(sp.n_clusters):
        for i, wi in enumerate(point.beams[k]):
            x[sp.index[f"w_re[{k},{i}]"]] = wi.real
            x[sp.index[f"w_im[{k},{i}]"]] = wi.imag
        x[sp.index[f"R[{k}]"]] = point.rates[k]
        x[sp.index[f"p1[{k}]"]] = point.powers[k, 0]
        x[sp.index[f"p2[{k}]"]] = point.powers[k, 1]
        for q in range(3):
            x[sp.index[f"m{q + 1}[{k}]"]] = point.m[k, q]
        for q in range(4):
            x[sp.index[f"l{q + 1}[{k}]"]] = point.l[k, q]
        for j in range(sp.n_clusters):
            if j != k:
                x[sp.index[f"n[{k},{j}]"]] = point.n[k, j]
    for idx, expo in sp.aux.items():
        x[idx] = np.exp(expo.value(x))
    return x


def _solve_sub(sp, sca, iteration, current, cluster=None):
    """Solve one subproblem; ``current`` is the objective at the expansion point.

    An uncertified result (duality gap not closed) is still accepted when it
    is primal feasible to ``sub_tol`` and does not fall below ``current``:
    it is then a feasible point of the inner approximation at least as good
    as the expansion point, which keeps the iteration monotone and feasible.
    """
    res = solve(sp.program, tol=sca.sub_tol, gap_tol=sca.gap_tol)
    if res.status == "infeasible":
        raise InfeasibleError(
            "convex subproblem infeasible; the strong-user SNR target cannot be met",
            constraint="strong_snr", cluster=cluster,
        )
    if (res.status == "numerical-failure" and res.primal_residual <= sca.sub_tol
            and np.isfinite(res.objective) and -res.objective >= current):
        log.warning("iteration %d: accepting feasible uncertified subproblem solution (gap %.1e)",
                    iteration, res.gap)
        return res
    if not res.ok:
        raise SolverError(
            f"subproblem failed at iteration {iteration} ({res.status}/{res.solver_status}, "
            f"residuals {res.primal_residual:.1e}/{res.dual_residual:.1e}, gap {res.gap:.1e})",
            status=res.status, iteration=iteration, cluster=cluster,
        )
    return res


def _check_initial(assignment, config):
    for k in range(assignment.n_clusters):
        # the nominal target is reachable only if the cluster may use P/N_c
        if strong_snr_target(k, assignment.strong, config) <= 0:
            raise DegenerateInitializationError(f"strong channel {k} has no component outside the previous ones")


def solve_joint(assignment, config, sca=None, init=None, trace_path=None):
    """Joint beam design and power allocation by NOVA iterations.

    Parameters
    ----------
    assignment : ClusterAssignment
    config : SystemConfig
    sca : ScaConfig, optional
    init : ScaPoint, optional
        Starting point; defaults to :func:`init_alpha`.
    trace_path : str, optional
        Write a tab-separated iteration trace there.

    Returns
    -------
    BeamPowerSolution
        ``history[0]`` is the bound objective at the start point and
        ``history[i]`` the objective after iteration ``i``.
    """
    sca = sca or ScaConfig()
    _check_initial(assignment, config)
    point = init if init is not None else init_alpha(assignment, config)
    history = [float(np.sum(point.rates))]
    trace = []
    iterations = 0
    for it in range(sca.max_iter):
        sp = build_p1(point, assignment, config, sca.slack_box)
        res = _solve_sub(sp, sca, it, history[-1])
        sol = _point_from_solution(sp, res.x, assignment.strong)
        new = point.blend(sol, sca.step)
        step = float(np.linalg.norm(point_to_vector(sp, new) - point_to_vector(sp, point)))
        point = new
        iterations = it + 1
        history.append(float(np.sum(point.rates)))
        violation = verify_original_feasibility(
            BeamPowerSolution(point.beams, point.powers, point.rates, iterations, history), assignment, config
        ).max_violation
        trace.append({"iteration": iterations, "objective": history[-1], "violation": violation, "step": step})
        log.debug("joint iteration %d: objective %.6f, violation %.2e", iterations, history[-1], violation)
        if history[-1] - history[-2] < sca.tol:
            break
    if trace_path is not None:
        dump_trace(trace, trace_path)
    report = rate_report(assignment.strong, assignment.weak, point.beams, point.powers, config.noise_var, with_bound=True)
    return BeamPowerSolution(point.beams, point.powers, point.rates, iterations, history, report, trace)


def dump_trace(trace, path):
    """Tab-separated iteration trace: iteration, objective, violation, step norm."""
    with open(path, "w") as fh:
        fh.write("iteration\tobjective\tmax_violation\tstep_norm\n")
        for row in trace:
            fh.write(f"{row['iteration']}\t{row['objective']:.12g}\t{row['violation']:.3e}\t{row['step']:.6e}\n")


# --------------------------------------------------------------------------
# per-cluster problem
# --------------------------------------------------------------------------

def _greedy_constants(k, h1, h2, W_fixed, estimates, config):
    """Beam-independent interference coefficients of cluster ``k``."""
    pk = config.cluster_power
    a = sum(quad_pi(h1, h2, W_fixed[j]) for j in range(k)) * pk
    b = sum(abs(np.vdot(h2, estimates[j])) ** 2 for j in range(k + 1, len(estimates))) * pk
    return float(a), float(b)


def build_p2(k, point, strong, weak_channel, W_fixed, estimates, config, slack_box=SLACK_BOX):
    """Convex approximation of the per-cluster design problem of cluster ``k``.

    Other clusters enter through constants: designed beams for ``j < k``,
    matched-filter estimates for ``j > k``, each carrying ``P / N_c``.
    """
    h1, h2 = strong[k], weak_channel
    n_t = len(h1)
    sigma2 = config.noise_var
    a_const, b_const = _greedy_constants(k, h1, h2, W_fixed, estimates, config)
    b = ProgramBuilder()
    L = _Lifted(b)
    L.beam(0, n_t)
    R = b.var("R[0]")
    p1 = b.var("p1[0]")
    p2 = b.var("p2[0]")
    m1, m2 = b.var("m1[0]"), b.var("m2[0]")
    m3 = b.var("m3[0]") if a_const > 0 else None
    l1, l2, l3 = (b.var(f"l{q}[0]") for q in (1, 2, 3))
    mb, lb, wb = point.m, point.l, point.beam
    Rl = R * LN2

    b.ge(_f(l1 + m1, lb[0] + mb[0]), strong_snr_target(k, strong, config))
    b.exp_le(l1, p1)
    b.exp_le(m1, L.quad_minorant(h1, 0, wb))
    b.exp_le(m2, L.quad_minorant(h2, 0, wb))
    L.exp_sum_le(
        [Rl + l2 + m1, Rl + np.log(sigma2)],
        sigma2 + _f(l2 + m1, lb[1] + mb[0]) + _f(l3 + m1, lb[2] + mb[0]),
        "strong",
    )
    b.ge(_f(l2, lb[1]), p1)
    b.exp_le(l3, p2)
    lhs = [Rl + l2 + m2, Rl + np.log(sigma2 + b_const)]
    rhs = sigma2 + b_const + _f(l2 + m2, lb[1] + mb[1]) + _f(l3 + m2, lb[2] + mb[1])
    if m3 is not None:
        ln_a = np.log(a_const)
        lhs.append(Rl + m3 - m1 + ln_a)
        rhs = rhs + _f(m3 - m1 + ln_a, mb[2] - mb[0] + ln_a)
        b.rsoc_square([*L.inner(h1, 0), *L.inner(h2, 0)], _f(m3, mb[2]))
    L.exp_sum_le(lhs, rhs, "weak")
    L.null(strong[:k], 0)
    L.unit_ball(0)
    b.le(p1 + p2, config.cluster_power)
    b.ge(l3, np.log(POWER_FLOOR * config.total_power))
    program = b.build(-R)
    index = {name: i for i, name in enumerate(program.names)}
    return ScaProgram(program, index, L.aux, 1, n_t)


def cluster_bound_rate(k, strong, weak_channel, beam, p1, p2, W_fixed, estimates, config):
    """Weak rate of cluster ``k`` under the per-cluster interference bound."""
    h1 = strong[k]
    I_bar = greedy_interference_bound(
        k, weak_channel, W_fixed, beam, estimates, h1, p1, config.total_power, config.n_clusters
    )
    s, w = weak_sinr_branches(h1, weak_channel, beam, p1, p2, I_bar, config.noise_var)
    return float(np.log2(1.0 + min(s, w)))


def init_cluster(k, strong, weak_channel, W_fixed, estimates, config):
    """Tight expansion point at the matched-filter beam and the ``eta`` split."""
    h1, h2 = strong[k], weak_channel
    w = estimates[k]
    pk = config.cluster_power
    p = np.array([config.eta * pk, (1 - config.eta) * pk])
    m = np.array([
        _safe_log(abs(np.vdot(h1, w)) ** 2, "m1"),
        _safe_log(abs(np.vdot(h2, w)) ** 2, "m2"),
        _safe_log(quad_pi(h1, h2, w), "m3"),
    ])
    lp1 = _safe_log(p[0], "l1")
    l = np.array([lp1, lp1, _safe_log(p[1], "l3")])
    rate = cluster_bound_rate(k, strong, weak_channel, w, p[0], p[1], W_fixed, estimates, config)
    return ClusterPoint(w, m, l, p, rate)


def design_cluster(k, strong, weak_channel, W_fixed, estimates, config, sca=None):
    """Per-cluster beam and power design by NOVA iterations.

    Suitable as the ``optimizer`` argument of
    :func:`thp_noma.scheduling.schedule`.
    """
    sca = sca or ScaConfig()
    strong = np.asarray(strong)
    point = init_cluster(k, strong, weak_channel, W_fixed, estimates, config)
    history = [point.rate]
    iterations = 0
    for it in range(sca.max_iter):
        sp = build_p2(k, point, strong, weak_channel, W_fixed, estimates, config, sca.slack_box)
        res = _solve_sub(sp, sca, it, history[-1], cluster=k)
        x = res.x
        m = np.array([sp.get(x, "m1[0]"), sp.get(x, "m2[0]"),
                      sp.get(x, "m3[0]") if "m3[0]" in sp.index else point.m[2]])
        beam = _clean_beam(sp.beam(x, 0), strong[:k])
        if "m3[0]" not in sp.index:
            m[2] = np.log(max(quad_pi(strong[k], weak_channel, beam), LOG_FLOOR))
        sol = ClusterPoint(
            beam, m,
            np.array([sp.get(x, f"l{q}[0]") for q in (1, 2, 3)]),
            np.array([max(sp.get(x, "p1[0]"), 0.0), max(sp.get(x, "p2[0]"), 0.0)]),
            sp.get(x, "R[0]"),
        )
        point = point.blend(sol, sca.step)
        iterations = it + 1
        history.append(float(point.rate))
        if history[-1] - history[-2] < sca.tol:
            break
    return ClusterDesign(point.beam, float(point.powers[0]), float(point.powers[1]), float(point.rate),
                         iterations, history)


# --------------------------------------------------------------------------
# feasibility against the original constraints
# --------------------------------------------------------------------------

@dataclass
class FeasibilityReport:
    """Largest violation per constraint family.

    Families: ``strong_snr`` (relative to the target), ``rate_strong_side``
    and ``rate_weak_side`` (bits/s/Hz, weak side with the interference
    bound), ``null_space``, ``beam_norm``, ``total_power`` (relative to P)
    and ``nonnegative_power``.
    """

    violations: dict

    @property
    def max_violation(self):
        return max(self.violations.values())

    @property
    def worst(self):
        return max(self.violations, key=self.violations.get)

    def ok(self, tol=1e-6):
        return self.max_violation <= tol


def verify_original_feasibility(solution, assignment, config):
    """Evaluate the un-approximated constraints at ``solution``.

    ``solution`` needs ``beams`` and ``powers``; when it carries
    ``slack_rates`` those are the rates checked against both rate branches.
    """
    H1, H2 = assignment.strong, assignment.weak
    W = np.asarray(solution.beams)
    powers = np.asarray(solution.powers, dtype=float)
    n_c = len(H1)
    rates = getattr(solution, "slack_rates", None)
    if rates is None:
        rates = bound_rates(assignment, config, W, powers)
    v = dict.fromkeys(
        ("strong_snr", "rate_strong_side", "rate_weak_side", "null_space", "beam_norm",
         "total_power", "nonnegative_power"), 0.0)
    for k in range(n_c):
        h1, h2, w = H1[k], H2[k], W[k]
        target = strong_snr_target(k, H1, config)
        achieved = powers[k, 0] * abs(np.vdot(h1, w)) ** 2
        v["strong_snr"] = max(v["strong_snr"], (target - achieved) / max(target, LOG_FLOOR))
        I_bar = interference_upper_bound(k, H1, H2, W, powers)
        s, ws = weak_sinr_branches(h1, h2, w, powers[k, 0], powers[k, 1], I_bar, config.noise_var)
        v["rate_strong_side"] = max(v["rate_strong_side"], rates[k] - np.log2(1 + s))
        v["rate_weak_side"] = max(v["rate_weak_side"], rates[k] - np.log2(1 + ws))
        if k:
            v["null_space"] = max(v["null_space"], float(np.linalg.norm(H1[:k].conj() @ w)))
        v["beam_norm"] = max(v["beam_norm"], np.linalg.norm(w) - 1.0)
    v["total_power"] = max(0.0, (powers.sum() - config.total_power) / config.total_power)
    v["nonnegative_power"] = max(0.0, float(-powers.min()))
    return FeasibilityReport({key: float(max(val, 0.0)) for key, val in v.items()})
