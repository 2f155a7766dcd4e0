from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thp_noma import sca as sca_mod
from thp_noma.channel import SystemConfig, generate_population
from thp_noma.conic import SolverResult
from thp_noma.errors import DegenerateInitializationError, InfeasibleError, SolverError, ThpNomaError
from thp_noma.rates import BeamPowerSolution
from thp_noma.sca import (
    ScaConfig,
    build_p1,
    build_p2,
    design_cluster,
    init_alpha,
    init_cluster,
    point_to_vector,
    solve_joint,
    taylor_exp,
    taylor_quad,
    verify_original_feasibility,
)
from thp_noma.scheduling import ClusterAssignment, matched_filter_estimates, schedule
from thp_noma.zf import zf_noma_rates

from conftest import crandn


def _instance(seed, n_c=2, n_t=4, snr_db=15.0, eta=0.3):
    cfg = SystemConfig(n_tx=n_t, n_clusters=n_c, eta=eta).with_snr_db(snr_db)
    rng = np.random.default_rng(seed)
    assignment = ClusterAssignment.from_channels(crandn(rng, n_c, n_t), 0.1 * crandn(rng, n_c, n_t))
    return assignment, cfg


def test_taylor_exp_examples():
    assert taylor_exp(0.0, 0.0) == 1.0
    assert taylor_exp(1.0, 0.0) == 2.0 <= np.e
    h = 1e-6
    for xb in (-3.0, 0.0, 2.5):
        fd = (np.exp(xb + h) - np.exp(xb - h)) / (2 * h)
        slope = (taylor_exp(xb + h, xb) - taylor_exp(xb - h, xb)) / (2 * h)
        assert slope == pytest.approx(fd, rel=1e-6)


def test_taylor_quad_examples(rng):
    e1 = np.array([1.0, 0.0], dtype=complex)
    assert taylor_quad(e1, 2 * e1, e1) == pytest.approx(3.0)
    c, d = crandn(rng, 3), crandn(rng, 3)
    assert taylor_quad(c, d, d) == pytest.approx(abs(np.vdot(c, d)) ** 2, rel=1e-14)


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_taylor_exp_minorant(x, xb):
    assert taylor_exp(x, xb) <= np.exp(x) * (1 + 1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_taylor_quad_minorant(seed):
    rng = np.random.default_rng(seed)
    c, d, db = crandn(rng, 4), crandn(rng, 4), crandn(rng, 4)
    assert taylor_quad(c, d, db) <= abs(np.vdot(c, d)) ** 2 + 1e-12


def test_variable_count_two_by_two():
    assignment, cfg = _instance(0, n_c=2, n_t=2)
    sp = build_p1(init_alpha(assignment, cfg), assignment, cfg)
    assert sp.n_decision == 30


@pytest.mark.parametrize("n_c", [1, 2, 3, 4])
def test_init_point_feasible(n_c):
    assignment, cfg = _instance(n_c, n_c=n_c)
    point = init_alpha(assignment, cfg)
    sp = build_p1(point, assignment, cfg)
    assert sp.program.max_violation(point_to_vector(sp, point)) <= 1e-9
    zero_rate = replace(point, rates=np.zeros(n_c))
    assert sp.program.max_violation(point_to_vector(sp, zero_rate)) <= 1e-9
    # the rate slacks sit on the boundary: any increase breaks a constraint
    bumped = replace(point, rates=point.rates + 1e-4)
    assert sp.program.max_violation(point_to_vector(sp, bumped)) > 1e-9


def test_init_alpha_examples():
    assignment, cfg = _instance(0, n_c=2, n_t=4)
    cfg = replace(cfg, total_power=4.0, eta=0.5)
    point = init_alpha(assignment, cfg)
    assert np.allclose(point.powers[:, 0], 1.0)
    assert np.allclose(point.l[:, 0], 0.0)
    H = np.diag([2.0, 0.5, 1.0]).astype(complex)
    ortho = ClusterAssignment.from_channels(H, 0.1 * np.ones((3, 3)))
    point = init_alpha(ortho, SystemConfig(n_tx=3, n_clusters=3))
    assert np.allclose(point.m[:, 0], np.log([4.0, 0.25, 1.0]))


def test_init_alpha_degenerate():
    # weak channel of cluster 0 is orthogonal to the estimate of cluster 1
    strong = np.eye(2, dtype=complex)
    weak = np.array([[0.1, 0.0], [0.05, 0.05]], dtype=complex)
    cfg = SystemConfig(n_tx=2, n_clusters=2)
    with pytest.raises(DegenerateInitializationError, match=r"n\[0,1\]"):
        init_alpha(ClusterAssignment.from_channels(strong, weak), cfg)


def test_build_p2_single_cluster():
    assignment, cfg = _instance(3, n_c=1, n_t=3)
    est = matched_filter_estimates(assignment.strong)
    point = init_cluster(0, assignment.strong, assignment.weak[0], est[:0], est, cfg)
    sp = build_p2(0, point, assignment.strong, assignment.weak[0], est[:0], est, cfg)
    assert "m3[0]" not in sp.index and not any(n.startswith("n[") for n in sp.program.names)
    x = np.zeros(sp.program.n_variables)
    for i, wi in enumerate(point.beam):
        x[sp.index[f"w_re[0,{i}]"]], x[sp.index[f"w_im[0,{i}]"]] = wi.real, wi.imag
    values = {"R[0]": point.rate, "p1[0]": point.powers[0], "p2[0]": point.powers[1],
              "m1[0]": point.m[0], "m2[0]": point.m[1],
              "l1[0]": point.l[0], "l2[0]": point.l[1], "l3[0]": point.l[2]}
    for name, v in values.items():
        x[sp.index[name]] = v
    for idx, expo in sp.aux.items():
        x[idx] = np.exp(expo.value(x))
    assert sp.program.max_violation(x) <= 1e-9


def test_design_cluster_monotone():
    cfg = SystemConfig(n_tx=4, n_clusters=3).with_snr_db(15)
    _, design, trace = schedule(generate_population(cfg, 5), cfg, design_cluster)
    for d in trace.designs:
        assert np.all(np.diff(d.history) >= -1e-6)
        assert d.iterations <= 100
        assert d.p1 + d.p2 <= cfg.cluster_power * (1 + 1e-8)


def test_solve_joint_small(tmp_path):
    assignment, cfg = _instance(11, n_c=2)
    path = tmp_path / "trace.tsv"
    sol = solve_joint(assignment, cfg, trace_path=str(path))
    assert np.all(np.diff(sol.history) >= -1e-6)
    assert sol.history[-1] > sol.history[0]
    report = verify_original_feasibility(sol, assignment, cfg)
    assert report.ok(1e-6), report.violations
    # exact interference never hurts the certified rate
    assert np.all(sol.report.weak >= sol.slack_rates - 1e-6)
    lines = path.read_text().splitlines()
    assert lines[0].split("\t") == ["iteration", "objective", "max_violation", "step_norm"]
    assert len(lines) == sol.iterations + 1
    assert all(len(ln.split("\t")) == 4 for ln in lines)


def test_scale_consistency():
    assignment, cfg = _instance(4, n_c=2)
    a = solve_joint(assignment, cfg)
    b = solve_joint(assignment, replace(cfg, total_power=2 * cfg.total_power, noise_var=2 * cfg.noise_var))
    assert np.allclose(a.report.strong, b.report.strong, atol=1e-6)
    assert np.allclose(a.report.weak, b.report.weak, atol=1e-6)


def test_eta_near_one_starves_weak_users():
    assignment, cfg = _instance(2, n_c=2, n_t=2)
    low = solve_joint(assignment, replace(cfg, eta=0.5))
    high = solve_joint(assignment, replace(cfg, eta=0.999))
    assert high.powers[:, 1].sum() <= 0.001 * cfg.total_power + 1e-9
    assert high.report.sum_weak < 0.05 < low.report.sum_weak
    with pytest.raises(ThpNomaError):
        solve_joint(assignment, replace(cfg, eta=1.0))


def test_infeasible_subproblem_reported(monkeypatch):
    assignment, cfg = _instance(0)
    empty = np.zeros(0)
    fake = SolverResult("infeasible", empty, empty, np.nan, np.nan, np.nan, np.nan)
    monkeypatch.setattr(sca_mod, "solve", lambda *a, **k: fake)
    with pytest.raises(InfeasibleError) as info:
        solve_joint(assignment, cfg)
    assert info.value.constraint == "strong_snr"


def test_solver_failure_carries_iteration(monkeypatch):
    assignment, cfg = _instance(0)
    real = sca_mod.solve
    calls = []

    def flaky(program, **kw):
        calls.append(1)
        res = real(program, **kw)
        if len(calls) == 2:
            res.status, res.primal_residual = "numerical-failure", 1e-3
        return res

    monkeypatch.setattr(sca_mod, "solve", flaky)
    with pytest.raises(SolverError) as info:
        solve_joint(assignment, cfg, ScaConfig(tol=1e-12))
    assert info.value.iteration == 1


def test_uncertified_but_feasible_step_accepted(monkeypatch, caplog):
    assignment, cfg = _instance(0)
    reference = solve_joint(assignment, cfg)
    real = sca_mod.solve

    def gap_not_closed(program, **kw):
        res = real(program, **kw)
        res.status, res.gap = "numerical-failure", 1e-6
        return res

    monkeypatch.setattr(sca_mod, "solve", gap_not_closed)
    sol = solve_joint(assignment, cfg)
    assert "uncertified" in caplog.text
    assert np.allclose(sol.history, reference.history)
    assert verify_original_feasibility(sol, assignment, cfg).ok()


def test_uncertified_step_that_loses_objective_rejected(monkeypatch):
    assignment, cfg = _instance(0)
    real = sca_mod.solve

    def worse(program, **kw):
        res = real(program, **kw)
        res.status, res.objective = "numerical-failure", res.objective + 10.0
        return res

    monkeypatch.setattr(sca_mod, "solve", worse)
    with pytest.raises(SolverError):
        solve_joint(assignment, cfg)


def test_verify_flags_families():
    assignment, cfg = _instance(6, n_c=3)
    sol = solve_joint(assignment, cfg)
    assert verify_original_feasibility(sol, assignment, cfg).ok()

    def broken(**changes):
        fields = dict(beams=sol.beams.copy(), powers=sol.powers.copy(), slack_rates=sol.slack_rates.copy())
        fields.update(changes)
        return verify_original_feasibility(BeamPowerSolution(**fields), assignment, cfg)

    assert broken(powers=sol.powers * 1.5).worst == "total_power"
    W = sol.beams.copy()
    W[2] = W[2] + 0.1 * assignment.strong[0] / np.linalg.norm(assignment.strong[0])
    W[2] /= np.linalg.norm(W[2])
    assert broken(beams=W).violations["null_space"] > 1e-3
    P = sol.powers.copy()
    P[0, 0] *= 0.5
    assert broken(powers=P).worst == "strong_snr"
    assert broken(slack_rates=sol.slack_rates + 0.5).violations["rate_weak_side"] > 0.1
    W = sol.beams * 1.1
    assert broken(beams=W).violations["beam_norm"] == pytest.approx(0.1, rel=1e-6)


def test_zf_solution_satisfies_thp_null_space():
    assignment, cfg = _instance(8, n_c=3)
    zf = zf_noma_rates(assignment, cfg)
    report = verify_original_feasibility(zf, assignment, cfg)
    assert report.violations["null_space"] <= 1e-12
    assert report.violations["beam_norm"] <= 1e-12
    assert report.violations["total_power"] == 0.0


def test_sca_config_validation():
    for bad in ({"step": 0.0}, {"step": 1.5}, {"tol": 0.0}, {"max_iter": 0}, {"sub_tol": -1.0}):
        with pytest.raises(ValueError):
            ScaConfig(**bad)


def test_damped_step_still_monotone():
    assignment, cfg = _instance(9, n_c=2)
    sol = solve_joint(assignment, cfg, ScaConfig(step=0.5, max_iter=15))
    assert np.all(np.diff(sol.history) >= -1e-6)
    assert verify_original_feasibility(sol, assignment, cfg).ok()
