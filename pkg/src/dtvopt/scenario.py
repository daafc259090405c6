"""
JSON scenarios: presets, validation, seeded initial states and resolution
into a runnable :class:`~dtvopt.sim.Problem`.

Agent indices in scenario files are 1-based.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .controllers import GainParams
from .costs import CostModel, TeamCost, TimeSignal, preset_costs
from .graph import Graph, complete, empty, path, ring
from .sim import (ALGORITHMS, METRICS, IntegratorConfig, Problem, SwarmParams, algorithm_info,
                  default_dt, default_method)
from .switching import LayerSpec


class ScenarioError(ValueError):
    """Invalid scenario; ``path`` names the offending field (dotted)."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


_SEED_RANGES = {"seed": 7, "x_range": [-5.0, 5.0], "v_range": [-1.0, 1.0],
                "beta_range": [0.1, 2.0]}

PRESETS: dict[str, dict[str, Any]] = {
    "fig1": {
        "name": "fig1",
        "algorithm": "distributed-single",
        "graph": {"kind": "ring"},
        "costs": {"preset": "fig1"},
        "initial": dict(_SEED_RANGES),
        "integrator": {"method": "euler", "dt": 1e-4, "t_end": 20.0},
    },
    "fig2": {
        "name": "fig2",
        "algorithm": "distributed-double",
        "graph": {"kind": "ring"},
        "costs": {"preset": "fig1"},
        "initial": dict(_SEED_RANGES),
        "gains": {"mu": 5.0, "alpha": 12.0, "gamma": 5.0, "zeta": 12.0},
        "integrator": {"method": "euler", "dt": 1e-4, "t_end": 20.0},
    },
    "fig3": {
        "name": "fig3",
        "algorithm": "estimator-double",
        "graph": {"kind": "ring"},
        "costs": {"preset": "fig3"},
        "initial": dict(_SEED_RANGES),
        "gains": {"kappa": 12.0, "rho": 2.0, "alpha1": 0.1, "alpha2": 0.2 / 1.1},
        # the estimators chatter in a band proportional to dt
        "integrator": {"method": "euler", "dt": 2.5e-5, "t_end": 20.0},
    },
    "fig4": {
        "name": "fig4",
        "algorithm": "boundary-fixed",
        "graph": {"kind": "ring"},
        "costs": {"preset": "fig1"},
        "initial": dict(_SEED_RANGES),
        "gains": {"mu": 5.0, "alpha": 10.0, "gamma": 5.0, "zeta": 5.0,
                  "layer": {"epsilon": 2.0, "c": 0.0}},
        "integrator": {"method": "rk4", "dt": 1e-3, "t_end": 20.0},
    },
    "fig4-decaying": {
        "name": "fig4-decaying",
        "algorithm": "boundary-timevarying",
        "graph": {"kind": "ring"},
        "costs": {"preset": "fig1"},
        "initial": dict(_SEED_RANGES),
        "gains": {"mu": 5.0, "alpha": 10.0, "gamma": 5.0, "zeta": 5.0,
                  "layer": {"epsilon": 2.0, "c": 1.0}},
        "integrator": {"method": "rk4", "dt": 1e-3, "t_end": 20.0},
    },
    "fig5": {
        "name": "fig5",
        "algorithm": "swarm-double",
        "graph": {"kind": "proximity", "R": 5.0},
        "costs": {"preset": "fig5"},
        "initial": {"layout": "circle", "radius": 1.0},
        "swarm": {"R": 5.0, "d": 0.5, "beta": 20.0, "alpha": 1.0},
        "integrator": {"method": "euler", "dt": 1e-4, "t_end": 50.0},
    },
}

GRAPH_KINDS = ("ring", "path", "complete", "empty", "edges", "proximity")
_TOP_KEYS = {"preset", "name", "algorithm", "n", "graph", "costs", "initial", "gains",
             "integrator", "swarm", "tolerances"}
_GAIN_KEYS = {"tau", "mu", "alpha", "gamma", "zeta", "eta", "alpha1", "alpha2", "kappa", "rho",
              "est_alpha", "est_beta", "est_gamma", "layer", "psi", "pd_floor"}


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; values in ``override`` win, nested dicts merge."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(value, path: str, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    x = float(value)
    if not np.isfinite(x):
        raise ScenarioError(path, f"must be finite, got {value!r}")
    if positive and x <= 0:
        raise ScenarioError(path, f"must be positive, got {value!r}")
    if nonneg and x < 0:
        raise ScenarioError(path, f"must be nonnegative, got {value!r}")
    return x


def _matrix(value, path: str, shape: tuple[int, ...]) -> list:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(path, "expected a numeric array") from None
    if arr.shape != shape:
        raise ScenarioError(path, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(path, "entries must be finite")
    return arr.tolist()


def _range(value, path: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(path, f"expected [low, high], got {value!r}")
    lo, hi = _num(value[0], f"{path}[0]"), _num(value[1], f"{path}[1]")
    if hi < lo:
        raise ScenarioError(path, f"low {lo} exceeds high {hi}")
    return [lo, hi]


def _dict(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(path, f"expected an object, got {type(value).__name__}")
    return value


def _reject_unknown(d: dict, allowed: set, path: str):
    extra = sorted(set(d) - allowed)
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ScenarioError(where, f"unknown field (allowed: {', '.join(sorted(allowed))})")


def _norm_costs(raw, path: str) -> tuple[dict, int, int]:
    raw = _dict(raw, path)
    if "preset" in raw:
        _reject_unknown(raw, {"preset", "n"}, path)
        name = raw["preset"]
        n = int(_num(raw.get("n", 6), f"{path}.n", positive=True))
        try:
            preset_costs(name, n)
        except ValueError as exc:
            raise ScenarioError(f"{path}.preset", str(exc)) from None
        return {"preset": name, "n": n}, n, 2
    _reject_unknown(raw, {"agents"}, path)
    agents = raw.get("agents")
    if not isinstance(agents, list) or not agents:
        raise ScenarioError(f"{path}.agents", "expected a non-empty list of agent costs")
    out = []
    m = None
    for i, a in enumerate(agents):
        ap = f"{path}.agents[{i}]"
        a = _dict(a, ap)
        _reject_unknown(a, {"A", "g"}, ap)
        A = np.asarray(a.get("A"), dtype=float)
        if A.ndim != 2:
            raise ScenarioError(f"{ap}.A", "expected a matrix")
        m = A.shape[1] if m is None else m
        if A.shape[1] != m:
            raise ScenarioError(f"{ap}.A", f"expected {m} columns like agent 1, got {A.shape[1]}")
        sigs = a.get("g")
        if not isinstance(sigs, list) or len(sigs) != A.shape[0]:
            raise ScenarioError(f"{ap}.g", f"expected {A.shape[0]} signals, one per row of A")
        try:
            model = CostModel(A, [TimeSignal.from_dict(s) for s in sigs])
        except (TypeError, ValueError, KeyError) as exc:
            raise ScenarioError(ap, str(exc)) from None
        out.append(model.to_dict())
    return {"agents": out}, len(out), m


def _build_costs(costs: dict) -> list[CostModel]:
    if "preset" in costs:
        return preset_costs(costs["preset"], costs["n"])
    return [CostModel.from_dict(a) for a in costs["agents"]]


def _norm_graph(raw, n: int, path: str) -> dict:
    raw = _dict(raw, path)
    kind = raw.get("kind")
    if kind not in GRAPH_KINDS:
        raise ScenarioError(f"{path}.kind", f"expected one of {', '.join(GRAPH_KINDS)}, "
                                             f"got {kind!r}")
    if "n" in raw and raw["n"] != n:
        raise ScenarioError(f"{path}.n", f"graph has {raw['n']!r} agents but the costs "
                                         f"describe {n}")
    if kind == "proximity":
        _reject_unknown(raw, {"kind", "n", "R"}, path)
        return {"kind": kind, "R": _num(raw.get("R"), f"{path}.R", positive=True)}
    if kind != "edges":
        _reject_unknown(raw, {"kind", "n"}, path)
        return {"kind": kind, "n": n}
    _reject_unknown(raw, {"kind", "n", "edges"}, path)
    edges = raw.get("edges")
    if not isinstance(edges, list):
        raise ScenarioError(f"{path}.edges", "expected a list of [i, j] pairs")
    out = []
    for k, e in enumerate(edges):
        ep = f"{path}.edges[{k}]"
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise ScenarioError(ep, f"expected [i, j], got {e!r}")
        i, j = (int(_num(v, ep)) for v in e)
        for v in (i, j):
            if not 1 <= v <= n:
                raise ScenarioError(ep, f"agent {v} outside 1..{n}")
        if i == j:
            raise ScenarioError(ep, f"self-loop on agent {i}")
        out.append([i, j])
    return {"kind": kind, "n": n, "edges": out}


def _build_graph(graph: dict, n: int) -> Graph | None:
    kind = graph["kind"]
    if kind == "proximity":
        return None
    if kind == "edges":
        return Graph.from_edges(n, [(i - 1, j - 1) for i, j in graph["edges"]])
    return {"ring": ring, "path": path, "complete": complete, "empty": empty}[kind](n)


def _norm_initial(raw, n: int, m: int, path: str) -> dict:
    raw = _dict(raw, path)
    _reject_unknown(raw, {"seed", "x_range", "v_range", "beta_range", "layout", "radius",
                          "center", "X0", "V0", "beta0"}, path)
    out: dict[str, Any] = {}
    if "layout" in raw:
        if raw["layout"] != "circle":
            raise ScenarioError(f"{path}.layout", f"only 'circle' is supported, got "
                                                  f"{raw['layout']!r}")
        if m != 2:
            raise ScenarioError(f"{path}.layout", "the circle layout needs planar agents")
        out["layout"] = "circle"
        out["radius"] = _num(raw.get("radius", 1.0), f"{path}.radius", positive=True)
        out["center"] = _matrix(raw.get("center", [0.0, 0.0]), f"{path}.center", (2,))
    if "seed" in raw:
        seed = raw["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ScenarioError(f"{path}.seed", f"expected a nonnegative integer, got {seed!r}")
        out["seed"] = seed
    for key in ("x_range", "v_range", "beta_range"):
        if key in raw:
            out[key] = _range(raw[key], f"{path}.{key}")
    if "beta_range" in out and out["beta_range"][0] < 0:
        raise ScenarioError(f"{path}.beta_range", "adaptive gains must be nonnegative")
    if "X0" in raw:
        out["X0"] = _matrix(raw["X0"], f"{path}.X0", (n, m))
    if "V0" in raw:
        out["V0"] = _matrix(raw["V0"], f"{path}.V0", (n, m))
    if "beta0" in raw:
        b = raw["beta0"]
        npairs = n * (n - 1) // 2
        if isinstance(b, (int, float)) and not isinstance(b, bool):
            out["beta0"] = _num(b, f"{path}.beta0", nonneg=True)
        else:
            out["beta0"] = _matrix(b, f"{path}.beta0", (npairs,))
            if min(out["beta0"], default=0.0) < 0:
                raise ScenarioError(f"{path}.beta0", "adaptive gains must be nonnegative")
    if "X0" not in out and "layout" not in out and "x_range" not in out:
        raise ScenarioError(path, "need X0, a layout, or x_range with a seed")
    if any(k in out for k in ("x_range", "v_range", "beta_range")) and "seed" not in out:
        raise ScenarioError(f"{path}.seed", "random ranges need a recorded seed")
    return out


def initial_states(initial: dict, n: int, m: int, order: int,
                   adaptive: bool) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """``(X0, V0, beta0)`` from a normalised ``initial`` section.

    Random draws happen in a fixed order (positions, velocities, pair
    gains) from one generator, so a seed always reproduces the same state.
    Explicit arrays override their random counterpart without disturbing
    the other draws.
    """
    rng = np.random.default_rng(initial.get("seed", 0))
    npairs = n * (n - 1) // 2
    X0 = V0 = beta0 = None
    if "x_range" in initial:
        X0 = rng.uniform(*initial["x_range"], size=(n, m))
    if "v_range" in initial:
        V0 = rng.uniform(*initial["v_range"], size=(n, m))
    if "beta_range" in initial:
        beta0 = rng.uniform(*initial["beta_range"], size=npairs)
    if initial.get("layout") == "circle":
        th = 2.0 * np.pi * np.arange(n) / n
        X0 = np.asarray(initial["center"]) + initial["radius"] * np.c_[np.cos(th), np.sin(th)]
    if "X0" in initial:
        X0 = np.array(initial["X0"], dtype=float)
    if "V0" in initial:
        V0 = np.array(initial["V0"], dtype=float)
    if "beta0" in initial:
        b = initial["beta0"]
        beta0 = np.full(npairs, float(b)) if np.isscalar(b) else np.array(b, dtype=float)
    if order == 1:
        V0 = None
    elif V0 is None:
        V0 = np.zeros((n, m))
    if not adaptive:
        beta0 = None
    elif beta0 is None:
        beta0 = np.zeros(npairs)
    return X0, V0, beta0


def _norm_gains(raw, path: str) -> dict:
    raw = _dict(raw, path)
    _reject_unknown(raw, _GAIN_KEYS, path)
    out: dict[str, Any] = {}
    for k, v in raw.items():
        kp = f"{path}.{k}"
        if k == "layer":
            lay = _dict(v, kp)
            _reject_unknown(lay, {"epsilon", "c"}, kp)
            out[k] = {"epsilon": _num(lay.get("epsilon", 0.0), f"{kp}.epsilon", nonneg=True),
                      "c": _num(lay.get("c", 0.0), f"{kp}.c", nonneg=True)}
        elif v is None and k in ("alpha2", "psi"):
            out[k] = None
        elif k in ("alpha1", "alpha2", "eta"):
            x = _num(v, kp, positive=True)
            if x >= 1:
                raise ScenarioError(kp, f"exponent must lie in (0, 1), got {v!r}")
            out[k] = x
        else:
            out[k] = _num(v, kp, positive=True)
    return out


def _norm_integrator(raw, algorithm: str, path: str) -> dict:
    raw = _dict(raw, path)
    _reject_unknown(raw, {"method", "dt", "t_end", "log_stride"}, path)
    out = {"method": raw.get("method", default_method(algorithm)),
           "dt": _num(raw.get("dt", default_dt(algorithm)), f"{path}.dt", positive=True),
           "t_end": _num(raw.get("t_end", 20.0), f"{path}.t_end", nonneg=True),
           "log_stride": raw.get("log_stride")}
    if out["method"] not in ("euler", "rk4"):
        raise ScenarioError(f"{path}.method", f"expected 'euler' or 'rk4', got {out['method']!r}")
    if algorithm_info(algorithm).uses_sign and out["method"] != "euler":
        raise ScenarioError(f"{path}.method", f"{algorithm} has a discontinuous right-hand "
                                              "side; use euler")
    if out["log_stride"] is not None:
        ls = out["log_stride"]
        if isinstance(ls, bool) or not isinstance(ls, int) or ls < 1:
            raise ScenarioError(f"{path}.log_stride", f"expected a positive integer, got {ls!r}")
    return out


def _norm_swarm(raw, path: str) -> dict:
    raw = _dict(raw, path)
    _reject_unknown(raw, {"R", "d", "beta", "alpha"}, path)
    out = {"R": _num(raw.get("R", 5.0), f"{path}.R", positive=True),
           "d": _num(raw.get("d", 0.5), f"{path}.d", positive=True),
           "beta": _num(raw.get("beta", 20.0), f"{path}.beta", nonneg=True),
           "alpha": _num(raw.get("alpha", 1.0), f"{path}.alpha", nonneg=True)}
    if out["d"] >= out["R"]:
        raise ScenarioError(f"{path}.d", f"desired distance {out['d']} must be below R = "
                                         f"{out['R']}")
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated, fully defaulted scenario.

    Every section is stored in normalised JSON form, so ``to_dict`` and
    ``from_dict`` round-trip exactly and the dict alone reproduces a run.
    """

    name: str
    algorithm: str
    n: int
    m: int
    graph: dict
    costs: dict
    initial: dict
    gains: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    swarm: dict | None = None
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        raw = _dict(raw, "")
        _reject_unknown(raw, _TOP_KEYS, "")
        if "preset" in raw:
            name = raw["preset"]
            if name not in PRESETS:
                raise ScenarioError("preset", f"unknown preset {name!r}; expected one of "
                                              f"{', '.join(PRESETS)}")
            raw = deep_merge(PRESETS[name], {k: v for k, v in raw.items() if k != "preset"})
        alg = raw.get("algorithm")
        if alg not in ALGORITHMS:
            raise ScenarioError("algorithm", f"unknown algorithm {alg!r}; expected one of "
                                             f"{', '.join(sorted(ALGORITHMS))}")
        info = algorithm_info(alg)
        if "costs" not in raw:
            raise ScenarioError("costs", "missing cost specification")
        costs, n, m = _norm_costs(raw["costs"], "costs")
        if "n" in raw and raw["n"] != n:
            raise ScenarioError("n", f"costs describe {n} agents but n = {raw['n']!r}")
        if "graph" not in raw:
            raise ScenarioError("graph", "missing graph specification")
        graph = _norm_graph(raw["graph"], n, "graph")
        swarm = None
        if info.swarm:
            swarm = _norm_swarm(raw.get("swarm", {}), "swarm")
            if graph["kind"] != "proximity":
                raise ScenarioError("graph.kind", "swarm laws need a proximity graph")
        elif raw.get("swarm") is not None:
            raise ScenarioError("swarm", f"{alg} takes no swarm parameters")
        tol = _dict(raw.get("tolerances", {}), "tolerances")
        for k in tol:
            if k not in METRICS:
                raise ScenarioError(f"tolerances.{k}", f"unknown metric; expected one of "
                                                       f"{', '.join(METRICS)}")
        tolerances = {k: _num(v, f"tolerances.{k}") for k, v in tol.items()}
        name = raw.get("name", alg)
        if not isinstance(name, str) or not name:
            raise ScenarioError("name", "expected a non-empty string")
        return cls(
            name=name,
            algorithm=alg,
            n=n,
            m=m,
            graph=graph,
            costs=costs,
            initial=_norm_initial(raw.get("initial", {}), n, m, "initial"),
            gains=_norm_gains(raw.get("gains", {}), "gains"),
            integrator=_norm_integrator(raw.get("integrator", {}), alg, "integrator"),
            swarm=swarm,
            tolerances=tolerances,
        )

    def to_dict(self) -> dict:
        out = {"name": self.name, "algorithm": self.algorithm, "n": self.n,
               "graph": copy.deepcopy(self.graph), "costs": copy.deepcopy(self.costs),
               "initial": copy.deepcopy(self.initial), "gains": copy.deepcopy(self.gains),
               "integrator": dict(self.integrator), "tolerances": dict(self.tolerances)}
        if self.swarm is not None:
            out["swarm"] = dict(self.swarm)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_override(self, dotted: str, value) -> "ScenarioConfig":
        """Copy with one field replaced, e.g. ``gains.layer.epsilon``."""
        keys = dotted.split(".")
        patch: dict = {}
        cur = patch
        for k in keys[:-1]:
            cur = cur.setdefault(k, {})
        cur[keys[-1]] = value
        return ScenarioConfig.from_dict(deep_merge(self.to_dict(), patch))

    def gain_params(self) -> GainParams:
        kw = {k: v for k, v in self.gains.items() if k != "layer"}
        if "layer" in self.gains:
            kw["layer"] = LayerSpec(**self.gains["layer"])
        return GainParams(**kw)

    def resolve(self) -> Problem:
        info = algorithm_info(self.algorithm)
        X0, V0, beta0 = initial_states(self.initial, self.n, self.m, info.order, info.adaptive)
        graph = _build_graph(self.graph, self.n)
        sw = SwarmParams(**self.swarm) if self.swarm is not None else None
        return Problem(
            algorithm=self.algorithm,
            team=TeamCost(_build_costs(self.costs)),
            X0=X0,
            integrator=IntegratorConfig(**self.integrator),
            params=self.gain_params(),
            V0=V0,
            graph=graph,
            proximity_R=self.graph.get("R"),
            beta0=beta0,
            swarm=sw,
        )


def parse_scenario(source: str | Path | dict) -> ScenarioConfig:
    """Load a scenario from a JSON file, a preset name or an already-parsed dict."""
    if isinstance(source, dict):
        return ScenarioConfig.from_dict(source)
    text = str(source)
    if text in PRESETS and not Path(text).exists():
        return ScenarioConfig.from_dict({"preset": text})
    p = Path(source)
    if not p.is_file():
        raise ScenarioError("", f"scenario file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"{p} is not valid JSON: {exc}") from None
    return ScenarioConfig.from_dict(raw)
