import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtvopt.bounds import double_phi_bar, offset_difference_bounds, single_phi_bar
from dtvopt.controllers import (Condition, GainParams, TeamState, centralized_double,
                                centralized_single, check_gain_conditions,
                                consensus_p_extremes, continuous_double_step,
                                distributed_double_step, distributed_single_step,
                                estimator_double_step, estimator_single_step,
                                fixed_layer_error_bound, fmt_num, pd_project, phi_double,
                                phi_single, zero_sum_estimators)
from dtvopt.costs import (AssumptionError, CostModel, TeamCost, TimeSignal, derivatives,
                          preset_costs)
from dtvopt.graph import Graph, empty, path, ring
from dtvopt.switching import LayerSpec, boundary_layer

from builders import beta_matrix, bundle, connected_graphs, pair_betas
from oracles import (loop_distributed_double, loop_distributed_single, loop_tracking_rate,
                     neighbours)


def arrays(n, m, lo=-3, hi=3):
    # coarse grid values make exact ties (sgn = 0) common
    return st.lists(st.integers(lo * 4, hi * 4), min_size=n * m, max_size=n * m).map(
        lambda v: np.array(v, dtype=float).reshape(n, m) / 4)


class TestInternalSignals:
    def test_first_family_agent_one(self):
        b = derivatives(preset_costs("fig1")[0], [0.0, 1.0], [0.0, 0.0], 0.0)
        np.testing.assert_allclose(phi_single(b), [1.0, 0.0], atol=1e-12)

    def test_on_moving_minimizer_equals_its_velocity(self):
        c = CostModel(np.eye(2), [TimeSignal("sin", -1.0, 2.0), TimeSignal("cos", -3.0, 0.5)])
        t = 0.8
        cpos = np.array([math.sin(2 * t), 3 * math.cos(0.5 * t)])
        cvel = np.array([2 * math.cos(2 * t), -1.5 * math.sin(0.5 * t)])
        np.testing.assert_allclose(phi_single(derivatives(c, cpos, cvel, t)), cvel, atol=1e-12)

    def test_static_minimizer_gives_zero(self):
        c = CostModel([[2.0, 1.0], [0.0, 1.0]], [TimeSignal(offset=1.0), TimeSignal(offset=-2.0)])
        x = np.linalg.solve(c.A, [-1.0, 2.0])
        b = derivatives(c, x, [0.0, 0.0], 3.0)
        np.testing.assert_allclose(phi_single(b), 0.0, atol=1e-12)
        np.testing.assert_allclose(phi_double(b), 0.0, atol=1e-12)
        np.testing.assert_allclose(centralized_double(b), 0.0, atol=1e-12)
        np.testing.assert_allclose(centralized_single(b, 2.0), 0.0, atol=1e-12)

    def test_centralized_single_scalar(self):
        c = CostModel([[1.0]], [TimeSignal("sin", -1.0, 1.0)])
        u = centralized_single(derivatives(c, [0.0], [0.0], 0.0), tau=1.0)
        np.testing.assert_allclose(u, [1.0], atol=1e-12)

    def test_phi_double_quadratic_closed_form(self, rng):
        # grad = s x + g with s = 2: phi = -(g'' + s v + g')/s - s (s x + g)
        c = preset_costs("fig5")[2]
        x, v, t = rng.normal(size=2), rng.normal(size=2), 1.9
        val, d1, d2 = c.signals(t)
        g, gd, gdd = 2 * val, 2 * d1, 2 * d2
        expect = -(gdd + 2 * v + gd) / 2 - 2 * (2 * x + g)
        np.testing.assert_allclose(phi_double(derivatives(c, x, v, t)), expect, atol=1e-12)

    def test_singular_hessian_rejected(self):
        c = CostModel([[1.0, 0.0], [0.0, 0.0]], [TimeSignal(), TimeSignal()])
        b = derivatives(c, [1.0, 1.0], [0.0, 0.0], 0.0)
        for law in (phi_single, phi_double, lambda bb: centralized_single(bb, 1.0)):
            with pytest.raises(AssumptionError):
                law(b)


class TestDistributedSingle:
    def test_two_agent_example(self):
        st_ = TeamState(0.0, np.array([[1.0, 2.0], [0.0, 0.0]]), beta=pair_betas(2))
        phi = np.array([[0.5, -0.5], [0.0, 0.0]])
        U, rates = distributed_single_step(st_, bundle(2, 2), path(2), phi=phi)
        np.testing.assert_allclose(U[0], -np.array([1.0, 1.0]) + phi[0])
        np.testing.assert_allclose(rates, [3.0])

    def test_identical_positions(self):
        st_ = TeamState(0.0, np.ones((2, 2)), beta=pair_betas(2, 5.0))
        phi = np.array([[1.0, 2.0], [3.0, 4.0]])
        U, rates = distributed_single_step(st_, bundle(2, 2), path(2), phi=phi)
        np.testing.assert_array_equal(U, phi)
        np.testing.assert_array_equal(rates, [0.0])

    def test_gains_follow_pairs_not_edges(self):
        X = np.array([[0.0], [1.0], [3.0]])
        betas = np.array([1.0, 2.0, 3.0])  # pairs (0,1), (0,2), (1,2)
        st_ = TeamState(0.0, X, beta=betas)
        U, _ = distributed_single_step(st_, bundle(3, 1), Graph.from_edges(3, [(1, 2)]),
                                       phi=np.zeros((3, 1)))
        np.testing.assert_allclose(U[:, 0], [0.0, 3.0, -3.0])


@given(connected_graphs(), st.data())
def test_distributed_single_matches_loop(g, data):
    n = g.n
    X = data.draw(arrays(n, 2))
    phi = data.draw(arrays(n, 2))
    betas = np.array(data.draw(st.lists(st.floats(0, 5), min_size=n * (n - 1) // 2,
                                        max_size=n * (n - 1) // 2)))
    state = TeamState(0.0, X, beta=betas)
    U, rates = distributed_single_step(state, bundle(n, 2), g, phi=phi)
    np.testing.assert_allclose(U, loop_distributed_single(X, g.adjacency, beta_matrix(n, betas), phi),
                               atol=1e-12)
    np.testing.assert_allclose(rates, [np.abs(X[i] - X[j]).sum() for i, j in g.edge_list])
    # couplings cancel over the team
    np.testing.assert_allclose((U - phi).sum(axis=0), 0.0, atol=1e-9)


class TestDistributedDouble:
    P = GainParams(mu=1.0, alpha=1.0, gamma=1.0, zeta=1.0)

    def test_two_agent_example(self):
        st_ = TeamState(0.0, np.array([[1.0], [0.0]]), V=np.zeros((2, 1)), beta=pair_betas(2))
        phi = np.array([[0.25], [0.0]])
        U, rates = distributed_double_step(st_, bundle(2, 1), path(2), self.P, phi=phi)
        np.testing.assert_allclose(U[0], [-2.0 + 0.25])
        np.testing.assert_allclose(rates, [1.0])

    def test_consensus_state(self):
        st_ = TeamState(0.0, np.ones((3, 2)), V=np.full((3, 2), 2.0), beta=pair_betas(3, 4.0))
        phi = np.arange(6.0).reshape(3, 2)
        for step in (distributed_double_step, continuous_double_step):
            U, rates = step(st_, bundle(3, 2), ring(3), GainParams(layer=LayerSpec(1.0)), phi=phi)
            np.testing.assert_array_equal(U, phi)
            np.testing.assert_array_equal(rates, 0.0)

    def test_layer_example(self):
        st_ = TeamState(0.0, np.array([[3.0, 4.0], [0.0, 0.0]]), V=np.zeros((2, 2)),
                        beta=pair_betas(2))
        P = GainParams(mu=0.0, alpha=0.0, gamma=1.0, zeta=1.0)
        U, rates = continuous_double_step(st_, bundle(2, 2), path(2), P, LayerSpec(5.0),
                                          phi=np.zeros((2, 2)))
        np.testing.assert_allclose(rates, [2.5])
        assert np.linalg.norm(U[0]) == pytest.approx(0.5)

    def test_small_layer_approaches_signum_direction(self, rng):
        X, V = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        st_ = TeamState(0.0, X, V=V, beta=pair_betas(4))
        g, phi = ring(4), np.zeros((4, 2))
        U_lay, r_lay = continuous_double_step(st_, bundle(4, 2), g, self.P, LayerSpec(1e-12),
                                              phi=phi)
        # with a vanishing layer h(z) is the unit direction and z.h is ||z||_2
        Z = X + V
        np.testing.assert_allclose(r_lay, [np.linalg.norm(Z[i] - Z[j]) for i, j in g.edge_list],
                                   rtol=1e-9)
        for i in range(4):
            ref = -sum((X[i] - X[j]) + (V[i] - V[j]) +
                       boundary_layer(Z[i] - Z[j], LayerSpec(0.0)) for j in neighbours(g.adjacency, i))
            np.testing.assert_allclose(U_lay[i], ref, atol=1e-9)


@given(connected_graphs(), st.data(), st.booleans())
def test_distributed_double_matches_loop(g, data, layered):
    n = g.n
    X, V, phi = (data.draw(arrays(n, 2)) for _ in range(3))
    betas = np.array(data.draw(st.lists(st.floats(0, 5), min_size=n * (n - 1) // 2,
                                        max_size=n * (n - 1) // 2)))
    P = GainParams(mu=1.5, alpha=0.7, gamma=2.0, zeta=0.5, layer=LayerSpec(0.8, 0.3))
    state = TeamState(1.2, X, V=V, beta=betas)
    if layered:
        U, rates = continuous_double_step(state, bundle(n, 2), g, P, phi=phi)
        h = lambda z: boundary_layer(z, P.layer, 1.2)  # noqa: E731
    else:
        U, rates = distributed_double_step(state, bundle(n, 2), g, P, phi=phi)
        h = None
    ref = loop_distributed_double(X, V, g.adjacency, beta_matrix(n, betas), phi,
                                  P.mu, P.alpha, P.gamma, P.zeta, h)
    np.testing.assert_allclose(U, ref, atol=1e-9)
    assert np.all(rates >= 0)
    np.testing.assert_allclose((U - phi).sum(axis=0), 0.0, atol=1e-9)


class TestEstimators:
    def test_single_combination(self):
        n, m = 2, 2
        st_ = TeamState(0.0, np.zeros((n, m)), est_single=zero_sum_estimators(n, m, "single"))
        b = bundle(n, m, grad=[[2.0, 0.0], [2.0, 0.0]])
        r = estimator_single_step(st_, b, path(2), GainParams(tau=1.0))
        np.testing.assert_allclose(r.S, [[-1.0, 0.0], [-1.0, 0.0]])
        np.testing.assert_array_equal(r.xi_dot, 0.0)

    def test_single_tracker_example(self):
        n, m = 2, 2
        st_ = TeamState(0.0, np.zeros((n, m)), est_single=zero_sum_estimators(n, m, "single"))
        b = bundle(n, m, grad=[[1.0, 0.0], [3.0, 0.0]])
        r = estimator_single_step(st_, b, path(2), GainParams(est_alpha=0.7))
        np.testing.assert_allclose(r.xi_dot, [[0.7, 0.0], [-0.7, 0.0]])
        np.testing.assert_allclose(r.xi_dot.sum(axis=0), 0.0)

    def test_double_combination(self):
        n, m = 2, 2
        st_ = TeamState(0.0, np.zeros((n, m)), V=np.zeros((n, m)),
                        est_double=zero_sum_estimators(n, m, "double"))
        b = bundle(n, m, grad=[[2.0, 0.0], [2.0, 0.0]])
        r = estimator_double_step(st_, b, path(2), GainParams())
        np.testing.assert_allclose(r.S, [[-4.0, 0.0], [-4.0, 0.0]])
        # constant Hessians: the Hessian-rate block of the tracker stays zero
        np.testing.assert_array_equal(r.estimates[1][:, m:, :], 0.0)

    def test_double_at_team_optimum(self):
        costs = preset_costs("fig1")
        team = TeamCost(costs)
        t = 1.1
        xs, vs = team.optimum(t)
        X, V = np.tile(xs, (6, 1)), np.tile(vs, (6, 1))
        b = team.bundles(X, V, t)
        # start the trackers at the team average so every agent holds it
        xi = np.concatenate([b.grad, b.pt_grad, b.dt_grad, b.pt_dt_grad], axis=1)
        xi = xi.mean(axis=0) - xi
        ph = np.concatenate([b.hess, b.dt_hess], axis=1)
        ph = ph.mean(axis=0) - ph
        st_ = TeamState(t, X, V=V, est_double=(xi, ph))
        r = estimator_double_step(st_, b, ring(6), GainParams())
        np.testing.assert_allclose(r.xi_dot, 0.0, atol=1e-12)
        # S = -H^{-1}(pt_dt_grad avg + dt_grad avg) equals the optimum's acceleration
        h = 1e-5
        acc = (team.optimum(t + h)[1] - team.optimum(t - h)[1]) / (2 * h)
        np.testing.assert_allclose(r.S, np.tile(acc, (6, 1)), atol=1e-6)

    def test_zero_sum_start_kinds(self):
        assert [a.shape for a in zero_sum_estimators(3, 2, "single")] == [(3, 2), (3, 2, 2), (3, 2)]
        assert [a.shape for a in zero_sum_estimators(3, 2, "double")] == [(3, 8), (3, 4, 2)]
        with pytest.raises(ValueError):
            zero_sum_estimators(3, 2, "triple")


@given(connected_graphs(), st.data())
def test_tracker_rates_match_loop_and_cancel(g, data):
    n, m = g.n, 2
    grads = data.draw(arrays(n, m))
    st_ = TeamState(0.0, data.draw(arrays(n, m)), est_single=zero_sum_estimators(n, m, "single"))
    P = GainParams(est_alpha=1.3, est_beta=0.4, est_gamma=2.0, eta=0.5)
    r = estimator_single_step(st_, bundle(n, m, grad=grads), g, P)
    np.testing.assert_allclose(r.xi_dot, loop_tracking_rate(grads, g.adjacency, 1.3), atol=1e-12)
    np.testing.assert_allclose(r.xi_dot.sum(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(r.psi_dot.sum(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose((r.U - r.S).sum(axis=0), 0.0, atol=1e-9)


class TestPdProject:
    def test_spd_unchanged(self):
        M = np.array([[2.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(pd_project(M, 0.1), M, atol=1e-12)

    def test_zero(self):
        np.testing.assert_allclose(pd_project(np.zeros((2, 2)), 0.1), 0.1 * np.eye(2), atol=1e-15)

    def test_indefinite_diagonal(self):
        np.testing.assert_allclose(pd_project(np.diag([5.0, -1.0]), 0.1), np.diag([5.0, 0.1]),
                                   atol=1e-12)

    def test_floor_must_be_positive(self):
        with pytest.raises(ValueError):
            pd_project(np.eye(2), 0.0)


@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9), st.floats(1e-3, 1.0))
def test_pd_project_floor_and_symmetry(vals, floor):
    M = np.array(vals).reshape(3, 3)
    P = pd_project(M, floor)
    np.testing.assert_allclose(P, P.T, atol=1e-12)
    assert np.linalg.eigvalsh(P).min() >= floor * (1 - 1e-9)
    np.testing.assert_allclose(pd_project(P, floor), P, atol=1e-9)


class TestGainConditions:
    def test_consensus_condition_passes(self):
        rep = check_gain_conditions(GainParams(mu=5, alpha=12, gamma=5, zeta=12), 1.0)
        c = rep.conditions[0]
        assert rep.passed and c.lhs == pytest.approx(5 / 144)
        assert c.line() == "γ/(αζ) = 0.0347 < λ₂ = 1.0 : PASS"

    def test_consensus_condition_fails(self):
        rep = check_gain_conditions(GainParams(alpha=1, zeta=1, gamma=2), 1.0)
        assert not rep.passed
        assert rep.conditions[0].line().endswith(": FAIL")

    def test_psi_search(self):
        rep = check_gain_conditions(GainParams(mu=5, alpha=10, gamma=5, zeta=5), 1.0,
                                    boundary=True)
        assert rep.psi_searched and rep.passed
        assert 0.2497 <= rep.psi < 0.25
        assert len(rep.conditions) == 4
        # the binding pair must not print as equal
        assert "0.25 < μ/(2α) = 0.25" not in "\n".join(c.line() for c in rep.conditions)

    def test_infeasible_psi(self):
        rep = check_gain_conditions(GainParams(alpha=1, zeta=1, gamma=2), 1.0, boundary=True)
        assert not rep.passed

    def test_given_psi_too_large(self):
        rep = check_gain_conditions(GainParams(mu=5, alpha=10, gamma=5, zeta=5), 1.0, psi=0.3,
                                    boundary=True)
        assert not rep.passed and not rep.psi_searched

    def test_report_dict(self):
        d = check_gain_conditions(GainParams(), 2.0).to_dict()
        assert d["passed"] and d["conditions"][0]["margin"] == pytest.approx(1.0)

    @pytest.mark.parametrize("x,txt", [(1.0, "1.0"), (0.034722, "0.0347"), (-2, "-2.0"),
                                       (1234567.0, "1.23e+06")])
    def test_number_format(self, x, txt):
        assert fmt_num(x) == txt

    def test_condition_line_reports_failure(self):
        assert Condition("a", 2.0, "b", 1.0).line() == "a = 2.0 >= b = 1.0 : FAIL"


class TestFixedLayerBound:
    P4 = GainParams(mu=5, alpha=10, gamma=5, zeta=5, layer=LayerSpec(2.0))

    def test_zero_width(self):
        P = GainParams(mu=5, alpha=10, gamma=5, zeta=5, layer=LayerSpec(0.0))
        assert fixed_layer_error_bound(P, 6, 2, 10.0, 0.2, ring(6)) == 0.0

    def test_square_root_scaling(self):
        P1 = GainParams(mu=5, alpha=10, gamma=5, zeta=5, layer=LayerSpec(1.0))
        P4 = GainParams(mu=5, alpha=10, gamma=5, zeta=5, layer=LayerSpec(4.0))
        b1 = fixed_layer_error_bound(P1, 6, 2, 10.0, 0.2, ring(6))
        assert fixed_layer_error_bound(P4, 6, 2, 10.0, 0.2, ring(6)) == pytest.approx(2 * b1)

    def test_finite_positive(self):
        b = fixed_layer_error_bound(self.P4, 6, 2, 10.0, 0.2, ring(6))
        assert 0 < b < np.inf

    def test_p_extremes_match_dense_restriction(self):
        g, psi = ring(6), 0.2
        lo, hi = consensus_p_extremes(self.P4, g, psi)
        from dtvopt.graph import laplacian
        L = laplacian(g)
        a, z, gm, mu = 10, 5, 5, 5
        P = np.block([[(a * gm + mu * z) * L - 2 * psi * gm * np.eye(6), gm * np.eye(6)],
                      [gm * np.eye(6), z * np.eye(6)]])
        # orthonormal basis of mean-zero vectors, applied to both blocks
        Q = np.linalg.qr(np.eye(6) - 1 / 6)[0][:, :5]
        B = np.block([[Q, np.zeros((6, 5))], [np.zeros((6, 5)), Q]])
        ev = np.linalg.eigvalsh(B.T @ P @ B)
        assert lo == pytest.approx(ev.min(), rel=1e-9)
        assert hi == pytest.approx(ev.max(), rel=1e-9)

    def test_not_positive_definite(self):
        P = GainParams(mu=1, alpha=1, gamma=5, zeta=1, layer=LayerSpec(1.0))
        with pytest.raises(ValueError):
            fixed_layer_error_bound(P, 6, 2, 1.0, 0.5, ring(6))

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            fixed_layer_error_bound(self.P4, 6, 2, 1.0, 0.0, ring(6))
        with pytest.raises(ValueError):
            consensus_p_extremes(self.P4, empty(3))


class TestPhiBars:
    def test_offset_bounds_first_family(self):
        team = TeamCost(preset_costs("fig1"))
        db, dbd, dbdd = offset_difference_bounds(team)
        assert db == pytest.approx(2 * 5 * math.sqrt(2))
        assert dbd == dbdd == pytest.approx(db)

    def test_single_bar_dominates_samples(self, rng):
        team = TeamCost(preset_costs("fig1"))
        beta_x = 3.0
        bar = single_phi_bar(team, beta_x)
        for _ in range(50):
            t = rng.uniform(0, 20)
            X = rng.uniform(-1, 1, size=(6, 2)) * beta_x / (2 * math.sqrt(2))
            phi = phi_single(team.bundles(X, None, t))
            assert np.max(np.linalg.norm(phi[:, None] - phi[None], axis=2)) <= bar

    def test_double_bar_dominates_samples(self, rng):
        team = TeamCost(preset_costs("fig1"))
        bar = double_phi_bar(team, 2.0, 2.0)
        for _ in range(50):
            t = rng.uniform(0, 20)
            X = rng.uniform(-1, 1, size=(6, 2)) / math.sqrt(2)
            V = rng.uniform(-1, 1, size=(6, 2)) / math.sqrt(2)
            phi = phi_double(team.bundles(X, V, t))
            assert np.max(np.linalg.norm(phi[:, None] - phi[None], axis=2)) <= bar

    def test_requires_identical_hessians(self):
        with pytest.raises(AssumptionError):
            single_phi_bar(TeamCost(preset_costs("fig3")), 1.0)
