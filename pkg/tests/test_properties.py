"""Cross-module invariants: exhaustive sweeps and hypothesis properties."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtvopt.cli import main
from dtvopt.controllers import (GainParams, TeamState, centralized_double,
                                continuous_double_step, distributed_double_step,
                                distributed_single_step, estimator_double_step,
                                estimator_single_step, phi_double, zero_sum_estimators)
from dtvopt.costs import CostModel, TeamCost, TimeSignal, fd_check, preset_costs
from dtvopt.graph import Graph, is_connected, lambda2, pair_index
from dtvopt.switching import LayerSpec, boundary_layer

from oracles import nx_connected
from builders import connected_graphs


def test_connectivity_equivalence_on_200_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        p = rng.uniform(0.05, 0.8)
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
        g = Graph.from_edges(n, edges)
        assert (lambda2(g) > 1e-9) == is_connected(g) == nx_connected(g.adjacency)


@pytest.mark.parametrize("family", ["fig1", "fig3", "fig5"])
def test_fd_check_on_100_samples(family):
    rng = np.random.default_rng(99)
    costs = preset_costs(family)
    for _ in range(100):
        c = costs[int(rng.integers(len(costs)))]
        x, v = rng.uniform(-5, 5, 2), rng.uniform(-3, 3, 2)
        assert fd_check(c, x, v, float(rng.uniform(0, 30))) < 1e-5


def test_optimum_identities_on_dense_grid():
    ts = np.linspace(0, 50, 2001)
    t1, t3, t5 = (TeamCost(preset_costs(f)) for f in ("fig1", "fig3", "fig5"))
    for t in ts:
        for team in (t1, t3, t5):
            xs, _ = team.optimum(t)
            assert np.linalg.norm(team.gradient_sum(np.tile(xs, (6, 1)), t)) < 1e-10
        assert abs(np.linalg.norm(t1.optimum(t)[0]) - 3.5) < 1e-12
        np.testing.assert_allclose(t5.optimum(t)[0],
                                   [-7 * np.sin(0.5 * t) / (t + 1), -3.5 * np.sin(0.1 * t)],
                                   atol=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=4), st.floats(1e-3, 10))
def test_layer_norm(z, eps):
    z = np.array(z)
    if np.linalg.norm(z) < 1e-6:
        return
    assert np.linalg.norm(boundary_layer(z, LayerSpec(eps))) < 1
    assert np.linalg.norm(boundary_layer(z, LayerSpec(0.0))) == pytest.approx(1.0)


def _permute_pairs(betas, perm, n):
    # pair (i, j) of the relabelled team is pair (inv[i], inv[j]) of the original
    inv = np.argsort(perm)
    out = np.empty_like(betas)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = sorted((inv[i], inv[j]))
            out[pair_index(i, j, n)] = betas[pair_index(a, b, n)]
    return out


@given(connected_graphs(), st.data())
def test_laws_permutation_equivariant(g, data):
    n = g.n
    perm = np.array(data.draw(st.permutations(range(n))))
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    X, V = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
    betas = rng.uniform(0, 2, n * (n - 1) // 2)
    team = TeamCost(preset_costs("fig1", n))
    P = GainParams(mu=2, alpha=1, gamma=1, zeta=2, layer=LayerSpec(0.5))
    # agent k of the relabelled team is agent inv[k] of the original
    inv = np.argsort(perm)
    gp = g.relabel(perm)
    costs_p = [preset_costs("fig1", n)[k] for k in inv]
    team_p = TeamCost(costs_p)
    s = TeamState(0.3, X, V=V, beta=betas)
    sp = TeamState(0.3, X[inv], V=V[inv], beta=_permute_pairs(betas, perm, n))
    b, bp = team.bundles(X, V, 0.3), team_p.bundles(X[inv], V[inv], 0.3)
    for law in (lambda st_, bb, gg: distributed_single_step(st_, bb, gg)[0],
                lambda st_, bb, gg: distributed_double_step(st_, bb, gg, P)[0],
                lambda st_, bb, gg: continuous_double_step(st_, bb, gg, P)[0]):
        np.testing.assert_allclose(law(sp, bp, gp), law(s, b, g)[inv], atol=1e-10)
    es = TeamState(0.3, X, V=V, est_single=zero_sum_estimators(n, 2, "single"),
                   est_double=zero_sum_estimators(n, 2, "double"))
    esp = TeamState(0.3, X[inv], V=V[inv], est_single=zero_sum_estimators(n, 2, "single"),
                    est_double=zero_sum_estimators(n, 2, "double"))
    np.testing.assert_allclose(estimator_single_step(esp, bp, gp, P).U,
                               estimator_single_step(es, b, g, P).U[inv], atol=1e-10)
    np.testing.assert_allclose(estimator_double_step(esp, bp, gp, P).U,
                               estimator_double_step(es, b, g, P).U[inv], atol=1e-10)


@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8), st.floats(0, 20),
       st.sampled_from(["sin", "cos", "damped"]))
def test_single_agent_centralized_equals_internal_signal(vals, t, kind):
    A = np.array(vals[:4]).reshape(2, 2) + 4 * np.eye(2)
    c = CostModel(A, [TimeSignal(kind, 1.3, 0.7), TimeSignal("sin", -2.0, 0.2, 0.4)])
    team = TeamCost([c])
    x, v = np.array(vals[4:6]), np.array(vals[6:])
    agg = team.team_bundles(x[None], v[None], t)
    own = team.bundles(x[None], v[None], t)
    np.testing.assert_allclose(centralized_double(agg), phi_double(own), rtol=1e-9, atol=1e-9)


def test_meta_reproduces_run(tmp_path):
    s = tmp_path / "s.json"
    s.write_text(json.dumps({"preset": "fig2", "integrator": {"t_end": 0.05}}))
    main(["run", "--scenario", str(s), "--out", str(tmp_path / "a"), "--quiet"])
    meta = json.loads((tmp_path / "a" / "fig2.meta.json").read_text())
    again = tmp_path / "again.json"
    again.write_text(json.dumps(meta["scenario"]))
    main(["run", "--scenario", str(again), "--out", str(tmp_path / "b"), "--quiet"])
    assert (tmp_path / "a" / "fig2.csv").read_bytes() == (tmp_path / "b" / "fig2.csv").read_bytes()
