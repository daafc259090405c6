import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtvopt.graph import ring
from dtvopt.scenario import (PRESETS, ScenarioConfig, ScenarioError, deep_merge, initial_states,
                             parse_scenario)


def cfg(**over):
    return ScenarioConfig.from_dict({"preset": "fig1", **over})


class TestPresets:
    def test_first_preset(self):
        c = parse_scenario({"preset": "fig1"})
        p = c.resolve()
        assert c.n == 6 and c.algorithm == "distributed-single"
        assert p.graph.edge_list == ring(6).edge_list
        np.testing.assert_allclose(p.team.optimum(np.pi / 2)[0], [3.5, 0.0], atol=1e-12)

    @pytest.mark.parametrize("name", list(PRESETS))
    def test_every_preset_resolves_and_round_trips(self, name):
        c = parse_scenario(name)
        assert ScenarioConfig.from_dict(c.to_dict()) == c
        assert ScenarioConfig.from_dict(json.loads(c.to_json())) == c
        p = c.resolve()
        assert p.X0.shape == (6, 2)

    def test_seeded_state_reproducible(self):
        a = parse_scenario("fig2").resolve()
        b = parse_scenario("fig2").resolve()
        np.testing.assert_array_equal(a.X0, b.X0)
        np.testing.assert_array_equal(a.beta0, b.beta0)
        assert np.all((a.X0 >= -5) & (a.X0 <= 5))
        assert np.all((a.beta0 >= 0.1) & (a.beta0 <= 2))

    def test_circle_start(self):
        p = parse_scenario("fig5").resolve()
        np.testing.assert_allclose(np.linalg.norm(p.X0, axis=1), 1.0)
        assert not p.V0.any() and p.graph is None and p.proximity_R == 5.0


class TestDefaults:
    def test_dt_from_law(self):
        raw = deep_merge(PRESETS["fig1"], {})
        del raw["integrator"]
        assert ScenarioConfig.from_dict(raw).integrator["dt"] == 1e-4
        raw = deep_merge(PRESETS["fig4"], {})
        del raw["integrator"]
        c = ScenarioConfig.from_dict(raw)
        assert (c.integrator["dt"], c.integrator["method"]) == (1e-3, "rk4")

    def test_double_defaults_to_rest(self):
        p = ScenarioConfig.from_dict({
            "algorithm": "distributed-double", "costs": {"preset": "fig1"},
            "graph": {"kind": "ring"}, "initial": {"X0": np.ones((6, 2)).tolist()}}).resolve()
        assert not p.V0.any() and not p.beta0.any()

    def test_explicit_arrays_override(self):
        c = cfg(initial={"X0": np.zeros((6, 2)).tolist(), "beta0": 0.5})
        p = c.resolve()
        assert not p.X0.any() and np.all(p.beta0 == 0.5)


class TestErrors:
    @pytest.mark.parametrize("over,where", [
        ({"graph": {"kind": "edges", "edges": [[1, 7]]}}, "graph.edges[0]"),
        ({"graph": {"kind": "edges", "edges": [[2, 2]]}}, "graph.edges[0]"),
        ({"graph": {"kind": "star"}}, "graph.kind"),
        ({"graph": {"kind": "ring", "n": 5}}, "graph.n"),
        ({"algorithm": "gradient-descent"}, "algorithm"),
        ({"gains": {"mu": -1}}, "gains.mu"),
        ({"gains": {"alpha1": 1.5}}, "gains.alpha1"),
        ({"gains": {"speed": 1}}, "gains.speed"),
        ({"integrator": {"method": "rk4"}}, "integrator.method"),
        ({"integrator": {"dt": 0}}, "integrator.dt"),
        ({"integrator": {"log_stride": 0}}, "integrator.log_stride"),
        ({"tolerances": {"happiness": 1}}, "tolerances.happiness"),
        ({"initial": {"x_range": [1, 0], "seed": 1}}, "initial.x_range"),
        ({"initial": {"seed": -3, "x_range": [0, 1]}}, "initial.seed"),
        ({"initial": {"X0": [[0, 0]]}}, "initial.X0"),
        ({"costs": {"preset": "fig9"}}, "costs.preset"),
        ({"swarm": {"R": 5}}, "swarm"),
        ({"n": 4}, "n"),
        ({"colour": "red"}, "colour"),
    ])
    def test_field_named(self, over, where):
        with pytest.raises(ScenarioError) as ei:
            cfg(**over)
        assert ei.value.path == where

    def test_ranges_need_seed(self):
        raw = deep_merge(PRESETS["fig1"], {})
        del raw["initial"]["seed"]
        with pytest.raises(ScenarioError, match="seed"):
            ScenarioConfig.from_dict(raw)

    def test_agent_costs_validated(self):
        base = {"algorithm": "centralized-single", "graph": {"kind": "complete"},
                "initial": {"X0": [[0.0]]}}
        with pytest.raises(ScenarioError) as ei:
            ScenarioConfig.from_dict({**base, "costs": {"agents": [
                {"A": [[1.0]], "g": [{"kind": "square"}]}]}})
        assert ei.value.path == "costs.agents[0]"
        with pytest.raises(ScenarioError):
            ScenarioConfig.from_dict({**base, "costs": {"agents": []}})

    def test_swarm_needs_proximity(self):
        with pytest.raises(ScenarioError) as ei:
            ScenarioConfig.from_dict({"algorithm": "swarm-double", "costs": {"preset": "fig5"},
                                      "graph": {"kind": "ring"},
                                      "initial": {"layout": "circle"}})
        assert ei.value.path == "graph.kind"

    def test_swarm_spacing_below_range(self):
        with pytest.raises(ScenarioError):
            ScenarioConfig.from_dict({"preset": "fig5", "swarm": {"d": 6.0}})

    def test_missing_file_and_bad_json(self, tmp_path):
        with pytest.raises(ScenarioError, match="not found"):
            parse_scenario(tmp_path / "nope.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        with pytest.raises(ScenarioError, match="not valid JSON"):
            parse_scenario(bad)


class TestCustom:
    def test_agent_list_and_edges(self, tmp_path):
        raw = {"name": "pair", "algorithm": "distributed-single",
               "costs": {"agents": [
                   {"A": [[1.0]], "g": [{"kind": "sin", "amp": -1.0, "omega": 1.0}]},
                   {"A": [[1.0]], "g": [{"kind": "const", "offset": 2.0}]}]},
               "graph": {"kind": "edges", "n": 2, "edges": [[1, 2]]},
               "initial": {"X0": [[0.0], [1.0]], "beta0": [1.5]}}
        path = tmp_path / "pair.json"
        path.write_text(json.dumps(raw))
        c = parse_scenario(path)
        assert (c.n, c.m, c.graph["n"]) == (2, 1, 2)
        p = c.resolve()
        assert p.graph.edge_list == ((0, 1),) and p.beta0.tolist() == [1.5]

    def test_override(self):
        c = parse_scenario("fig4").with_override("gains.layer.epsilon", 0.5)
        assert c.gain_params().layer.epsilon == 0.5 and c.gain_params().layer.c == 0.0
        with pytest.raises(ScenarioError):
            c.with_override("gains.layer.epsilon", -1)


@given(st.integers(0, 2**31), st.integers(2, 8), st.integers(1, 3), st.booleans())
def test_seeded_draw_order(seed, n, m, adaptive):
    init = {"seed": seed, "x_range": [-1.0, 1.0], "v_range": [-2.0, 2.0], "beta_range": [0.0, 1.0]}
    X, V, B = initial_states(init, n, m, 2, adaptive)
    rng = np.random.default_rng(seed)
    np.testing.assert_array_equal(X, rng.uniform(-1, 1, size=(n, m)))
    np.testing.assert_array_equal(V, rng.uniform(-2, 2, size=(n, m)))
    expect_b = rng.uniform(0, 1, size=n * (n - 1) // 2)
    if adaptive:
        np.testing.assert_array_equal(B, expect_b)
    else:
        assert B is None
    # overriding one array leaves the other draws alone
    X2, V2, _ = initial_states({**init, "X0": np.zeros((n, m)).tolist()}, n, m, 2, adaptive)
    assert not X2.any()
    np.testing.assert_array_equal(V2, V)
