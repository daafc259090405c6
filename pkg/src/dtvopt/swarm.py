"""
Pairwise potentials and swarm-tracking laws.

Pairs that start within sensing range are held together by a potential
that blows up at the range limit. Pairs that start apart feel a force
that fades to zero at the range limit. Both blow up at collision and
vanish at the desired spacing ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bounds import double_phi_bar
from .controllers import TeamState, _c, phi_double, phi_single
from .costs import AssumptionError, DerivativeBundle, TeamCost, signal_bounds
from .graph import Graph
from .kernels import CollisionError

__all__ = ["CollisionError", "PotentialSpec", "potential_profile", "potential_value",
           "potential_gradient", "swarm_single_step", "swarm_double_step",
           "swarm_beta_bound", "SwarmBound", "swarm_lyapunov", "swarm_phi_bar"]


@dataclass(frozen=True)
class PotentialSpec:
    R: float
    d: float
    initially_connected: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        if not (0 < self.d < self.R):
            raise ValueError(f"need 0 < d < R, got d={self.d}, R={self.R}")
        conn = np.array(self.initially_connected, dtype=np.uint8)
        conn.setflags(write=False)
        object.__setattr__(self, "initially_connected", conn)

    @classmethod
    def from_positions(cls, X0, R: float, d: float) -> "PotentialSpec":
        X0 = np.asarray(X0, dtype=float)
        diff = X0[:, np.newaxis, :] - X0[np.newaxis, :, :]
        conn = np.sqrt(np.sum(diff * diff, axis=-1)) < R
        np.fill_diagonal(conn, False)
        return cls(R=R, d=d, initially_connected=conn)


def potential_profile(s, connected: bool, R: float, d: float):
    """Scalar ``p(s)`` with ``dV/dx_i = p(s) (x_i - x_j) / s``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if connected:
            return np.where(s < R, (s - d) * (1.0 / s**2 + 1.0 / (R - s) ** 2), np.inf)
        return np.where(s < R, (s - d) / s**2 * (R - s) / (R - d), 0.0)


def _antiderivative(s, connected, R, d):
    if connected:
        return np.log(s) + d / s + (R - d) / (R - s) + np.log(R - s)
    s = np.minimum(s, R)
    return (-s + (R + d) * np.log(s) + R * d / s) / (R - d)


def potential_value(s, connected: bool, R: float, d: float):
    """``V(s)``, normalised so the minimum ``V(d) = 0``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = _antiderivative(s, connected, R, d) - _antiderivative(d, connected, R, d)
        if connected:
            val = np.where(s < R, val, np.inf)
    return np.where(s > 0, val, np.inf)


def potential_gradient(x_i, x_j, connected: bool, spec: PotentialSpec) -> np.ndarray:
    """``dV_ij / dx_i``; equals ``-dV_ij / dx_j`` by construction."""
    diff = np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float)
    s = float(np.linalg.norm(diff))
    if s == 0.0:
        raise CollisionError("coincident agents: potential gradient undefined")
    return float(potential_profile(s, connected, spec.R, spec.d)) * diff / s


def _potential_sum(state: TeamState, g: Graph, spec: PotentialSpec) -> np.ndarray:
    tails, heads = g.tails_heads()
    C, _ = kernels.potential_coupling(_c(state.X), tails, heads, spec.initially_connected,
                                      spec.R, spec.d)
    return C


def swarm_single_step(state: TeamState, bundles: DerivativeBundle, g: Graph, beta: float,
                      spec: PotentialSpec, phi: np.ndarray | None = None) -> np.ndarray:
    """``-beta sgn(sum_j dV_ij/dx_i) + phi_i`` over current neighbours."""
    phi = phi_single(bundles) if phi is None else phi
    return phi - beta * np.sign(_potential_sum(state, g, spec))


def swarm_double_step(state: TeamState, bundles: DerivativeBundle, g: Graph, alpha: float,
                      beta: float, spec: PotentialSpec,
                      phi: np.ndarray | None = None) -> np.ndarray:
    """Potential force, linear velocity damping, signum velocity consensus
    and the second-order internal signal. ``alpha = 0`` drops the damping.
    """
    tails, heads = g.tails_heads()
    V = _c(state.V)
    unit = np.ones(g.num_edges)
    lin, _ = kernels.sign_coupling(V, tails, heads, unit, 1.0)
    sgn, _ = kernels.sign_coupling(V, tails, heads, unit, 0.0)
    phi = phi_double(bundles) if phi is None else phi
    return phi - _potential_sum(state, g, spec) - alpha * lin - beta * sgn


def _scalar_hessian(team: TeamCost) -> float:
    if not team.identical_hessians():
        raise AssumptionError("swarm bounds need identical Hessians across agents")
    H = team.hess[0]
    sigma = float(H[0, 0])
    if sigma <= 0 or not np.allclose(H, sigma * np.eye(team.m), atol=1e-12):
        raise AssumptionError("swarm bounds need a Hessian of the form sigma * I with sigma > 0")
    return sigma


@dataclass(frozen=True)
class SwarmBound:
    beta_x: float
    phi_sup: float
    beta: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def swarm_beta_bound(X0, team: TeamCost, R: float, g_bar: float | None = None,
                     gdot_bar: float | None = None, gamma_margin: float = 1.0) -> SwarmBound:
    """Gain certified from the initial positions to dominate every ``||phi_i||_1``.

    With ``grad f_i = sigma x_i + b_i(t)``, ``g_bar`` and ``gdot_bar`` bound
    ``||b_i||_2`` and ``||b_i'||_2``; by default they come from the
    closed-form signal bounds scaled by ``||2 A_i^T||``. The position bound
    is ``||sum x_i(0)||/N + (2/sigma) g_bar + (N-1) R + margin`` and
    ``||phi_i||_1 <= sqrt(m) (beta_x + (g_bar + gdot_bar)/sigma)``.
    """
    X0 = np.asarray(X0, dtype=float)
    sigma = _scalar_hessian(team)
    sb = signal_bounds(team.costs)
    scale = float(max(np.linalg.norm(team.At2[i], 2) for i in range(team.n)))
    off = scale * sb[0] if g_bar is None else g_bar
    off_dot = scale * sb[1] if gdot_bar is None else gdot_bar
    n, m = X0.shape
    beta_x = (np.linalg.norm(X0.sum(axis=0)) / n + 2.0 / sigma * off + (n - 1) * R
              + gamma_margin)
    phi_sup = np.sqrt(m) * (beta_x + (off + off_dot) / sigma)
    return SwarmBound(float(beta_x), float(phi_sup), float(phi_sup + gamma_margin))


def swarm_lyapunov(X, V, spec: PotentialSpec) -> float:
    """``(1/N) sum_ij V_ij + |e_V|^2 / 2`` with ``V_ij`` taken over all pairs."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    iu, ju = np.triu_indices(n, 1)
    s = np.linalg.norm(X[iu] - X[ju], axis=1)
    conn = spec.initially_connected[iu, ju].astype(bool)
    vals = np.where(conn, potential_value(s, True, spec.R, spec.d),
                    potential_value(s, False, spec.R, spec.d))
    eV = 0.0 if V is None else np.sum((V - V.mean(axis=0)) ** 2)
    return float(2.0 * vals.sum() / n + 0.5 * eV)


def swarm_phi_bar(X0, V0, team: TeamCost, spec: PotentialSpec) -> tuple[float, float, float]:
    """``(beta_x, beta_v, phi_bar)`` for the second-order swarm law.

    Bounded potentials keep every pair within ``(N-1) R``; the energy bound
    gives ``||v_i - v_j|| <= 2 sqrt(2 W(0))``.
    """
    n = np.asarray(X0).shape[0]
    beta_x = (n - 1) * spec.R
    beta_v = 2.0 * np.sqrt(2.0 * swarm_lyapunov(X0, V0, spec))
    return beta_x, float(beta_v), double_phi_bar(team, beta_x, beta_v)
