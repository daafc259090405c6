"""
Fixed-step integration of the closed-loop team, with metric logging.

Positions, velocities, adaptive gains and estimator internals are advanced
together as one flat state vector. Signum-driven laws must use forward
Euler; smooth laws may use classical RK4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import kernels
from .bounds import double_phi_bar, single_phi_bar
from .controllers import (GainParams, TeamState, centralized_double, centralized_single,
                          consensus_p_extremes, continuous_double_step,
                          distributed_double_step, distributed_single_step,
                          estimator_double_step, estimator_single_step, phi_double,
                          phi_single)
from .costs import TeamCost
from .graph import Graph, is_connected
from .swarm import PotentialSpec, swarm_double_step, swarm_single_step


class SimulationAbort(RuntimeError):
    """The run cannot continue: non-finite state or a collision."""


@dataclass(frozen=True)
class AlgorithmInfo:
    order: int
    uses_sign: bool
    adaptive: bool = False
    estimator: str | None = None
    swarm: bool = False
    centralized: bool = False
    boundary: bool = False


ALGORITHMS: dict[str, AlgorithmInfo] = {
    "centralized-single": AlgorithmInfo(1, False, centralized=True),
    "distributed-single": AlgorithmInfo(1, True, adaptive=True),
    "estimator-single": AlgorithmInfo(1, True, estimator="single"),
    "centralized-double": AlgorithmInfo(2, False, centralized=True),
    "distributed-double": AlgorithmInfo(2, True, adaptive=True),
    "estimator-double": AlgorithmInfo(2, True, estimator="double"),
    "boundary-timevarying": AlgorithmInfo(2, False, adaptive=True, boundary=True),
    "boundary-fixed": AlgorithmInfo(2, False, adaptive=True, boundary=True),
    "swarm-single": AlgorithmInfo(1, True, swarm=True),
    "swarm-double": AlgorithmInfo(2, True, swarm=True),
}


def algorithm_info(name: str) -> AlgorithmInfo:
    try:
        return ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; expected one of {sorted(ALGORITHMS)}") \
            from None


def default_dt(algorithm: str) -> float:
    return 1e-4 if algorithm_info(algorithm).uses_sign else 1e-3


def default_method(algorithm: str) -> str:
    return "euler" if algorithm_info(algorithm).uses_sign else "rk4"


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "euler"
    dt: float = 1e-4
    t_end: float = 20.0
    log_stride: int | None = None

    def __post_init__(self):
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"integrator method must be 'euler' or 'rk4', got {self.method!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.log_stride is not None and self.log_stride < 1:
            raise ValueError(f"log_stride must be at least 1, got {self.log_stride}")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def stride(self) -> int:
        if self.log_stride is not None:
            return self.log_stride
        return max(1, int(round(0.01 / self.dt)))

    def to_dict(self) -> dict:
        return {"method": self.method, "dt": self.dt, "t_end": self.t_end,
                "log_stride": self.stride}


@dataclass(frozen=True)
class SwarmParams:
    R: float = 5.0
    d: float = 0.5
    beta: float = 20.0
    alpha: float = 1.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Problem:
    """A fully resolved run: everything :func:`integrate` needs.

    ``graph`` is ``None`` for proximity topologies, which are rebuilt from
    the positions with radius ``proximity_R`` at every right-hand-side
    evaluation. ``beta0`` is indexed by agent pair.
    """

    algorithm: str
    team: TeamCost
    X0: np.ndarray
    integrator: IntegratorConfig
    params: GainParams = field(default_factory=GainParams)
    V0: np.ndarray | None = None
    graph: Graph | None = None
    proximity_R: float | None = None
    beta0: np.ndarray | None = None
    swarm: SwarmParams | None = None

    def __post_init__(self):
        info = algorithm_info(self.algorithm)
        n, m = self.X0.shape
        if (self.team.n, self.team.m) != (n, m):
            raise ValueError(f"costs describe {self.team.n} agents in R^{self.team.m} but the "
                             f"initial state is {n}x{m}")
        if info.order == 2:
            if self.V0 is None or self.V0.shape != (n, m):
                raise ValueError("double-integrator runs need initial velocities of shape "
                                 f"{(n, m)}")
        if info.uses_sign and self.integrator.method != "euler":
            raise ValueError(f"{self.algorithm} has a discontinuous right-hand side; "
                             "use the euler method")
        if self.graph is None and self.proximity_R is None:
            raise ValueError("either a graph or a proximity radius is required")
        if self.graph is not None and self.graph.n != n:
            raise ValueError(f"graph has {self.graph.n} agents but the state has {n}")
        if info.swarm and self.swarm is None:
            raise ValueError(f"{self.algorithm} needs swarm parameters")
        if info.adaptive:
            npairs = n * (n - 1) // 2
            if self.beta0 is None or self.beta0.shape != (npairs,):
                raise ValueError(f"adaptive laws need {npairs} initial pair gains")
            if np.any(self.beta0 < 0):
                raise ValueError("initial adaptive gains must be nonnegative")

    @property
    def info(self) -> AlgorithmInfo:
        return algorithm_info(self.algorithm)

    def graph_at(self, X) -> Graph:
        if self.graph is not None:
            return self.graph
        tails, heads = kernels.proximity_edges(np.ascontiguousarray(X), self.proximity_R)
        n = X.shape[0]
        return _graph_from_pairs(n, (tails * n + heads).tobytes())


@lru_cache(maxsize=256)
def _graph_from_pairs(n: int, key: bytes) -> Graph:
    # the proximity graph rarely changes between steps, so reuse built graphs
    codes = np.frombuffer(key, dtype=np.intp)
    return Graph.from_edges(n, zip((codes // n).tolist(), (codes % n).tolist()))


METRICS = ("consensus_x", "consensus_v", "track_max", "center_err", "vel_err", "grad_sum",
           "min_dist", "max_conn_dist", "connected", "est_err", "control_tv", "phi_spread",
           "phi_l1", "beta_max")


@dataclass
class TrajectoryLog:
    """Samples of one run; rows of every array line up with ``times``."""

    algorithm: str
    times: np.ndarray
    X: np.ndarray
    U: np.ndarray
    xstar: np.ndarray
    vstar: np.ndarray
    metrics: dict[str, np.ndarray]
    V: np.ndarray | None = None
    beta: np.ndarray | None = None
    est: np.ndarray | None = None
    team: TeamCost | None = field(default=None, repr=False)
    params: GainParams | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.X.shape[2]

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Boolean mask of samples with ``t0 <= t <= t1`` (small slack for roundoff)."""
        return (self.times >= t0 - 1e-9) & (self.times <= t1 + 1e-9)

    def metric(self, name: str) -> np.ndarray:
        return self.metrics[name]

    def summary(self) -> dict:
        out = {"t_end": float(self.times[-1]), "samples": int(self.times.size)}
        for k in METRICS:
            v = self.metrics[k]
            if np.all(np.isnan(v)):
                continue
            out[f"final_{k}"] = float(v[-1])
        for k in ("phi_spread", "phi_l1", "beta_max", "max_conn_dist"):
            v = self.metrics[k]
            if not np.all(np.isnan(v)):
                out[f"max_{k}"] = float(np.nanmax(v))
        v = self.metrics["min_dist"]
        if not np.all(np.isnan(v)):
            out["min_min_dist"] = float(np.nanmin(v))
        return out


def consensus_errors(X, V=None) -> tuple[np.ndarray, np.ndarray | None]:
    """Deviation of every row from the row mean, for positions and velocities."""
    X = np.asarray(X, dtype=float)
    eX = X - X.mean(axis=0, keepdims=True)
    if V is None:
        return eX, None
    V = np.asarray(V, dtype=float)
    return eX, V - V.mean(axis=0, keepdims=True)


class _Layout:
    """Flat-vector layout of the extended state."""

    def __init__(self, parts: list[tuple[str, tuple[int, ...]]]):
        self.slices: dict[str, tuple[slice, tuple[int, ...]]] = {}
        off = 0
        for name, shape in parts:
            size = int(np.prod(shape))
            self.slices[name] = (slice(off, off + size), shape)
            off += size
        self.size = off

    def pack(self, values: dict[str, np.ndarray]) -> np.ndarray:
        y = np.empty(self.size)
        for name, (sl, shape) in self.slices.items():
            y[sl] = np.asarray(values[name], dtype=float).reshape(-1)
        return y

    def unpack(self, y) -> dict[str, np.ndarray]:
        return {name: y[sl].reshape(shape) for name, (sl, shape) in self.slices.items()}


def _layout(problem: Problem) -> _Layout:
    n, m = problem.X0.shape
    info = problem.info
    parts = [("X", (n, m))]
    if info.order == 2:
        parts.append(("V", (n, m)))
    if info.adaptive:
        parts.append(("beta", (n * (n - 1) // 2,)))
    if info.estimator == "single":
        parts += [("xi", (n, m)), ("psi", (n, m, m)), ("phi_est", (n, m))]
    elif info.estimator == "double":
        parts += [("xi", (n, 4 * m)), ("phi_est", (n, 2 * m, m))]
    return _Layout(parts)


def initial_vector(problem: Problem) -> tuple[_Layout, np.ndarray]:
    lay = _layout(problem)
    n, m = problem.X0.shape
    vals = {"X": problem.X0}
    if "V" in lay.slices:
        vals["V"] = problem.V0
    if "beta" in lay.slices:
        vals["beta"] = problem.beta0
    for name, (_, shape) in lay.slices.items():
        if name not in vals:
            # estimator internals start at zero, which has zero sum
            vals[name] = np.zeros(shape)
    return lay, lay.pack(vals)


@dataclass
class _Aux:
    U: np.ndarray
    phi: np.ndarray | None
    g: Graph
    est_signals: tuple[np.ndarray, ...] = ()


def make_rhs(problem: Problem, lay: _Layout) -> Callable[[float, np.ndarray],
                                                          tuple[np.ndarray, _Aux]]:
    """Right-hand side ``y' = F(t, y)`` of the extended closed loop."""
    info = problem.info
    team = problem.team
    params = problem.params
    alg = problem.algorithm
    spec_holder: dict[str, PotentialSpec] = {}
    if info.swarm:
        spec_holder["spec"] = PotentialSpec.from_positions(problem.X0, problem.swarm.R,
                                                           problem.swarm.d)

    def rhs(t: float, y: np.ndarray):
        s = lay.unpack(y)
        X = s["X"]
        V = s.get("V")
        g = problem.graph_at(X)
        dy = np.zeros_like(y)
        phi = None
        est_signals: tuple = ()
        if info.centralized:
            b = team.team_bundles(X, V, t)
            U = centralized_single(b, params.tau) if info.order == 1 else centralized_double(b)
        else:
            b = team.bundles(X, V, t)
            state = TeamState(t=t, X=X, V=V, beta=s.get("beta"))
            if info.estimator == "single":
                state = TeamState(t=t, X=X, beta=None,
                                  est_single=(s["xi"], s["psi"], s["phi_est"]))
                r = estimator_single_step(state, b, g, params)
                U = r.U
                dy[lay.slices["xi"][0]] = r.xi_dot.ravel()
                dy[lay.slices["psi"][0]] = r.psi_dot.ravel()
                dy[lay.slices["phi_est"][0]] = r.phi_dot.ravel()
                phi = r.S
                est_signals = r.estimates
            elif info.estimator == "double":
                state = TeamState(t=t, X=X, V=V, est_double=(s["xi"], s["phi_est"]))
                r = estimator_double_step(state, b, g, params)
                U = r.U
                dy[lay.slices["xi"][0]] = r.xi_dot.ravel()
                dy[lay.slices["phi_est"][0]] = r.phi_dot.ravel()
                phi = r.S
                est_signals = r.estimates
            elif info.swarm:
                sw = problem.swarm
                if info.order == 1:
                    phi = phi_single(b)
                    U = swarm_single_step(state, b, g, sw.beta, spec_holder["spec"], phi=phi)
                else:
                    phi = phi_double(b)
                    U = swarm_double_step(state, b, g, sw.alpha, sw.beta, spec_holder["spec"],
                                          phi=phi)
            elif alg == "distributed-single":
                phi = phi_single(b)
                U, rates = distributed_single_step(state, b, g, phi=phi)
                dy[lay.slices["beta"][0]][g.pair_indices] = rates
            elif alg == "distributed-double":
                phi = phi_double(b)
                U, rates = distributed_double_step(state, b, g, params, phi=phi)
                dy[lay.slices["beta"][0]][g.pair_indices] = rates
            else:
                phi = phi_double(b)
                U, rates = continuous_double_step(state, b, g, params, phi=phi)
                dy[lay.slices["beta"][0]][g.pair_indices] = rates
        if info.order == 1:
            dy[lay.slices["X"][0]] = U.ravel()
        else:
            dy[lay.slices["X"][0]] = V.ravel()
            dy[lay.slices["V"][0]] = U.ravel()
        return dy, _Aux(U=U, phi=phi, g=g, est_signals=est_signals)

    return rhs


def integrate(problem, progress: Callable[[float], None] | None = None) -> TrajectoryLog:
    """Run a problem (or anything with a ``resolve()`` method returning one).

    Raises :class:`SimulationAbort` on a non-finite state or a collision.
    """
    if hasattr(problem, "resolve"):
        problem = problem.resolve()
    cfg = problem.integrator
    info = problem.info
    team = problem.team
    n, m = problem.X0.shape
    lay, y = initial_vector(problem)
    rhs = make_rhs(problem, lay)
    dt, steps, stride = cfg.dt, cfg.steps, cfg.stride
    swarm_conn = None
    if info.swarm:
        swarm_conn = PotentialSpec.from_positions(problem.X0, problem.swarm.R,
                                                  problem.swarm.d).initially_connected
        iu, ju = np.triu_indices(n, 1)
        conn_pairs = swarm_conn[iu, ju].astype(bool)

    rows: dict[str, list] = {k: [] for k in ("t", "X", "V", "U", "beta", "est", "xs", "vs")}
    mrows: dict[str, list] = {k: [] for k in METRICS}
    tv_acc = 0.0
    tv_cnt = 0
    spread_max = -np.inf
    l1_max = -np.inf
    U_prev = None

    def record(k: int, t: float, y: np.ndarray, aux: _Aux):
        s = lay.unpack(y)
        X = s["X"].copy()
        V = s["V"].copy() if "V" in s else None
        xs, vs = team.optimum(t)
        rows["t"].append(t)
        rows["X"].append(X)
        rows["V"].append(V)
        rows["U"].append(np.array(aux.U))
        rows["beta"].append(s["beta"].copy() if "beta" in s else None)
        est_parts = [s[k2].ravel() for k2 in ("xi", "psi", "phi_est") if k2 in s]
        rows["est"].append(np.concatenate(est_parts) if est_parts else None)
        rows["xs"].append(xs)
        rows["vs"].append(vs)
        eX, eV = consensus_errors(X, V)
        err = np.linalg.norm(X - xs, axis=1)
        md = kernels.pair_distance_range(np.ascontiguousarray(X))[0] if n > 1 else np.nan
        est_err = np.nan
        if aux.est_signals:
            est_err = max(float(np.max(np.abs(q - q.mean(axis=0)))) for q in aux.est_signals)
        if swarm_conn is not None and conn_pairs.any():
            dist = np.linalg.norm(X[iu] - X[ju], axis=1)
            max_conn = float(dist[conn_pairs].max())
        else:
            max_conn = np.nan
        mrows["consensus_x"].append(float(np.linalg.norm(eX)))
        mrows["consensus_v"].append(float(np.linalg.norm(eV)) if eV is not None else np.nan)
        mrows["track_max"].append(float(err.max()))
        mrows["center_err"].append(float(np.linalg.norm(X.mean(axis=0) - xs)))
        mrows["vel_err"].append(float(np.linalg.norm(V - vs, axis=1).max())
                                if V is not None else np.nan)
        mrows["grad_sum"].append(float(np.linalg.norm(team.gradient_sum(X, t))))
        mrows["min_dist"].append(float(md))
        mrows["max_conn_dist"].append(max_conn)
        mrows["connected"].append(1.0 if is_connected(aux.g) else 0.0)
        mrows["est_err"].append(est_err)
        mrows["control_tv"].append(tv_acc / tv_cnt if tv_cnt else 0.0)
        mrows["phi_spread"].append(spread_max if aux.phi is not None else np.nan)
        mrows["phi_l1"].append(l1_max if aux.phi is not None else np.nan)
        mrows["beta_max"].append(float(s["beta"].max()) if "beta" in s and s["beta"].size
                                 else np.nan)

    def track(aux: _Aux):
        nonlocal tv_acc, tv_cnt, spread_max, l1_max, U_prev
        if U_prev is not None:
            tv_acc += float(np.abs(aux.U - U_prev).sum())
            tv_cnt += 1
        U_prev = np.array(aux.U)
        if aux.phi is not None:
            spread_max = max(spread_max, kernels.pair_distance_range(aux.phi)[1])
            l1_max = max(l1_max, float(np.abs(aux.phi).sum(axis=1).max()))

    def reset_window():
        nonlocal tv_acc, tv_cnt, spread_max, l1_max
        tv_acc, tv_cnt = 0.0, 0
        spread_max = l1_max = -np.inf

    for k in range(steps + 1):
        t = k * dt
        try:
            dy, aux = rhs(t, y)
        except kernels.CollisionError as exc:
            raise SimulationAbort(f"collision at step {k} (t = {t:.6g}): {exc}") from exc
        track(aux)
        if k % stride == 0 or k == steps:
            record(k, t, y, aux)
            reset_window()
            if progress is not None:
                progress(t)
        if k == steps:
            break
        if cfg.method == "euler":
            y = y + dt * dy
        else:
            try:
                k2, _ = rhs(t + 0.5 * dt, y + 0.5 * dt * dy)
                k3, _ = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
                k4, _ = rhs(t + dt, y + dt * k3)
            except kernels.CollisionError as exc:
                raise SimulationAbort(f"collision at step {k} (t = {t:.6g}): {exc}") from exc
            y = y + (dt / 6.0) * (dy + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise SimulationAbort(f"non-finite state at step {k + 1} (t = {(k + 1) * dt:.6g})")

    def stack(key):
        vals = rows[key]
        return None if vals[0] is None else np.array(vals)

    return TrajectoryLog(
        algorithm=problem.algorithm,
        times=np.array(rows["t"]),
        X=np.array(rows["X"]),
        U=np.array(rows["U"]),
        xstar=np.array(rows["xs"]),
        vstar=np.array(rows["vs"]),
        metrics={k: np.array(v, dtype=float) for k, v in mrows.items()},
        V=stack("V"),
        beta=stack("beta"),
        est=stack("est"),
        team=team,
        params=problem.params,
    )


LYAPUNOV_KINDS = ("centralized-single", "centralized-double", "gradient-sum")


def lyapunov_probe(log: TrajectoryLog, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Lyapunov function sampled along a log and its finite-difference slope.

    ``centralized-single``: half the squared team gradient at each agent's
    state, summed over agents. ``centralized-double`` adds half the squared
    gap between velocity and ``-H^{-1}(d/dt_partial grad + grad)``.
    ``gradient-sum``: half the squared sum of local gradients.
    """
    if kind not in LYAPUNOV_KINDS:
        raise ValueError(f"unknown Lyapunov kind {kind!r}; expected one of {LYAPUNOV_KINDS}")
    team = log.team
    W = np.empty(log.times.size)
    for k, t in enumerate(log.times):
        X = log.X[k]
        if kind == "gradient-sum":
            gs = team.gradient_sum(X, t)
            W[k] = 0.5 * gs @ gs
            continue
        V = None if log.V is None else log.V[k]
        b = team.team_bundles(X, V, t)
        W[k] = 0.5 * np.sum(b.grad ** 2)
        if kind == "centralized-double":
            if V is None:
                raise ValueError("centralized-double probe needs velocities")
            S0 = -np.einsum("nij,nj->ni", b.hess_inv, b.pt_grad + b.grad)
            W[k] += 0.5 * np.sum((S0 - V) ** 2)
    slope = np.gradient(W, log.times) if W.size > 1 else np.zeros_like(W)
    return W, slope


@dataclass(frozen=True)
class AppendixBounds:
    beta_x: float
    beta_v: float | None
    phi_bar: float
    beta_bar: float
    lambda_min: float
    lambda_max: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def appendix_gain_bounds(X0, V0, team: TeamCost, params: GainParams, g: Graph,
                         gamma_margin: float = 1.0, psi: float = 0.0) -> AppendixBounds:
    """Separation bounds certified from the initial state, and what they imply.

    ``beta_x`` (and ``beta_v``) bound every ``||x_i - x_j||`` (``||v_i - v_j||``)
    along the run, ``phi_bar`` bounds ``||phi_i - phi_j||`` and ``beta_bar``
    is a gain level that dominates ``(N-1) phi_bar / 2``. Without ``V0`` the
    first-order bound with an identity energy matrix is returned.
    """
    X0 = np.asarray(X0, dtype=float)
    n, m = X0.shape
    spread_x = float(np.max(np.abs(n * X0 - X0.sum(axis=0))))
    if V0 is None:
        lam_min = lam_max = 1.0
        spread = spread_x
    else:
        V0 = np.asarray(V0, dtype=float)
        lam_min, lam_max = consensus_p_extremes(params, g, psi)
        if lam_min <= 0:
            raise ValueError(f"error-energy matrix not positive definite "
                             f"(lambda_min = {lam_min:.3g})")
        spread = spread_x + float(np.max(np.abs(n * V0 - V0.sum(axis=0))))
    beta_x = 2.0 * np.sqrt(m * lam_max / (n * lam_min)) * spread + gamma_margin
    if V0 is None:
        beta_v = None
        phi_bar = single_phi_bar(team, beta_x)
    else:
        beta_v = beta_x
        phi_bar = double_phi_bar(team, beta_x, beta_v)
    beta_bar = (n - 1) * phi_bar / 2.0 + gamma_margin
    return AppendixBounds(float(beta_x), None if beta_v is None else float(beta_v),
                          float(phi_bar), float(beta_bar), float(lam_min), float(lam_max))
