"""
Control laws for single- and double-integrator teams.

Every law is a pure function of the current team state and the stacked
derivative bundle (one row per agent). Edge couplings go through the
kernels in :mod:`dtvopt.kernels`; all of them accumulate in edge-list
order so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import kernels
from .costs import AssumptionError, DerivativeBundle
from .graph import EdgeGains, Graph, jacobi_eigvalsh, laplacian
from .switching import LayerSpec

PD_FLOOR = 1e-6


@dataclass(frozen=True)
class GainParams:
    """Scalar gains of all laws; each law reads only the ones it needs."""

    tau: float = 1.0
    mu: float = 1.0
    alpha: float = 1.0
    gamma: float = 1.0
    zeta: float = 1.0
    eta: float = 0.5
    alpha1: float = 0.5
    alpha2: float | None = None
    kappa: float = 1.0
    rho: float = 1.0
    est_alpha: float = 1.0
    est_beta: float = 1.0
    est_gamma: float = 1.0
    layer: LayerSpec = field(default_factory=LayerSpec)
    psi: float | None = None
    pd_floor: float = PD_FLOOR

    @property
    def velocity_exponent(self) -> float:
        """``alpha2``, defaulting to ``2 alpha1 / (alpha1 + 1)``."""
        if self.alpha2 is not None:
            return self.alpha2
        return 2.0 * self.alpha1 / (self.alpha1 + 1.0)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in
               ("tau", "mu", "alpha", "gamma", "zeta", "eta", "alpha1", "kappa", "rho",
                "est_alpha", "est_beta", "est_gamma", "psi", "pd_floor")}
        out["alpha2"] = self.velocity_exponent
        out["layer"] = self.layer.to_dict()
        return out


@dataclass(frozen=True)
class TeamState:
    """Snapshot of a team.

    ``beta`` holds one adaptive gain per unordered agent pair, in
    upper-triangle order (see :func:`dtvopt.graph.pair_index`), so gains
    survive edges appearing and disappearing. ``est_single`` is
    ``(xi, psi, phi)`` with shapes ``(n, m)``, ``(n, m, m)``, ``(n, m)``;
    ``est_double`` is ``(xi, phi)`` with shapes ``(n, 4m)``, ``(n, 2m, m)``.
    """

    t: float
    X: np.ndarray
    V: np.ndarray | None = None
    beta: np.ndarray | None = None
    est_single: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    est_double: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def edge_beta(self, g: Graph) -> np.ndarray:
        if self.beta is None:
            raise ValueError("state carries no adaptive gains")
        return self.beta[g.pair_indices]

    def edge_gains(self, g: Graph) -> EdgeGains:
        return EdgeGains(dict(zip(g.edge_list, self.edge_beta(g))))

    def replace(self, **kw) -> "TeamState":
        return replace(self, **kw)


def zero_sum_estimators(n: int, m: int, kind: str) -> tuple:
    """Estimator internals all starting at zero, which satisfies the zero-sum start."""
    if kind == "single":
        return np.zeros((n, m)), np.zeros((n, m, m)), np.zeros((n, m))
    if kind == "double":
        return np.zeros((n, 4 * m)), np.zeros((n, 2 * m, m))
    raise ValueError(f"unknown estimator kind {kind!r}")


def _solve(H, rhs, H_inv=None):
    """``H^{-1} rhs`` for one or a stack of Hessians."""
    if H_inv is not None:
        return _mv(H_inv, rhs)
    try:
        cond = np.linalg.cond(H)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e14):
        raise AssumptionError("Hessian is singular: the internal signal needs an invertible Hessian")
    return np.linalg.solve(H, rhs[..., np.newaxis])[..., 0]


def phi_single(b: DerivativeBundle) -> np.ndarray:
    """``-H^{-1}(grad + d/dt_partial grad)``."""
    return -_solve(b.hess, b.grad + b.pt_grad, b.hess_inv)


def centralized_single(b: DerivativeBundle, tau: float) -> np.ndarray:
    """Newton-like tracking input ``-H^{-1}(tau grad + d/dt_partial grad)``."""
    return -_solve(b.hess, tau * b.grad + b.pt_grad, b.hess_inv)


def phi_double(b: DerivativeBundle) -> np.ndarray:
    """Internal signal of the second-order laws.

    ``-H^{-1}(pt_dt_grad + dt_grad) - H grad + H^{-1} dH H^{-1} (pt_grad + grad)``
    """
    first = -_solve(b.hess, b.pt_dt_grad + b.dt_grad, b.hess_inv)
    second = -_mv(b.hess, b.grad)
    inner = _solve(b.hess, b.pt_grad + b.grad, b.hess_inv)
    third = _solve(b.hess, _mv(b.dt_hess, inner), b.hess_inv)
    return first + second + third


def centralized_double(b: DerivativeBundle) -> np.ndarray:
    return phi_double(b)


def _unit(g: Graph) -> np.ndarray:
    return np.ones(g.num_edges)


def _c(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=float)


def distributed_single_step(state: TeamState, bundles: DerivativeBundle, g: Graph,
                            phi: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive signum consensus plus the local internal signal.

    Returns the inputs and the gain rates ``||x_i - x_j||_1``, one per edge
    of ``g`` in edge-list order. A precomputed ``phi`` skips recomputation.
    """
    tails, heads = g.tails_heads()
    C, rates = kernels.sign_coupling(_c(state.X), tails, heads, state.edge_beta(g), 0.0)
    return (phi_single(bundles) if phi is None else phi) - C, rates


class SingleEstimatorRates(NamedTuple):
    xi_dot: np.ndarray
    psi_dot: np.ndarray
    phi_dot: np.ndarray
    S: np.ndarray
    U: np.ndarray
    estimates: tuple[np.ndarray, np.ndarray, np.ndarray] = ()


def _tracking_rate(W, g: Graph, gain: float) -> np.ndarray:
    """``gain * sum_j sgn(w_j - w_i)`` for rows of any trailing shape."""
    tails, heads = g.tails_heads()
    flat = _c(W.reshape(W.shape[0], -1))
    C, _ = kernels.sign_coupling(flat, tails, heads, _unit(g), 0.0)
    return (-gain * C).reshape(W.shape)


def pd_project(M, floor: float = PD_FLOOR) -> np.ndarray:
    """Nearest symmetric matrix with every eigenvalue at least ``floor``.

    Accepts a single matrix or a stack along the leading axes.
    """
    if floor <= 0:
        raise ValueError(f"floor must be positive, got {floor}")
    M = np.asarray(M, dtype=float)
    S = 0.5 * (M + np.swapaxes(M, -1, -2))
    w, Q = np.linalg.eigh(S)
    if np.all(w >= floor):
        return S
    w = np.maximum(w, floor)
    return np.einsum("...ij,...j,...kj->...ik", Q, w, Q)


def _pd_inverse(M, floor):
    return kernels.pd_inverse(_c(M), floor)


def _mv(M, x):
    return (M @ x[..., np.newaxis])[..., 0]


def estimator_single_step(state: TeamState, bundles: DerivativeBundle, g: Graph,
                          params: GainParams) -> SingleEstimatorRates:
    """Single-integrator law driven by three distributed average trackers.

    The trackers follow the team averages of the gradient, the Hessian and
    the partial time derivative of the gradient; ``S`` combines them into
    the centralized input, and a finite-time ``sig^eta`` coupling aligns
    the agents.
    """
    xi, psi, phi = state.est_single
    w = xi + bundles.grad
    theta = psi + bundles.hess
    vs = phi + bundles.pt_grad
    _, theta_inv = _pd_inverse(theta, params.pd_floor)
    S = -_mv(theta_inv, params.tau * w + vs)
    tails, heads = g.tails_heads()
    C, _ = kernels.sign_coupling(_c(state.X), tails, heads, _unit(g), params.eta)
    return SingleEstimatorRates(
        xi_dot=_tracking_rate(w, g, params.est_alpha),
        psi_dot=_tracking_rate(theta, g, params.est_beta),
        phi_dot=_tracking_rate(vs, g, params.est_gamma),
        S=S,
        U=S - C,
        estimates=(w, theta, vs),
    )


def _relative_terms(state: TeamState, g: Graph, params: GainParams):
    tails, heads = g.tails_heads()
    Zlin = _c(params.mu * state.X + params.alpha * state.V)
    lin, _ = kernels.sign_coupling(Zlin, tails, heads, _unit(g), 1.0)
    Z = _c(params.gamma * state.X + params.zeta * state.V)
    return tails, heads, lin, Z


def distributed_double_step(state: TeamState, bundles: DerivativeBundle, g: Graph,
                            params: GainParams, phi: np.ndarray | None = None):
    """Second-order adaptive law: linear consensus plus a signum term on
    ``gamma dx + zeta dv``. Gain rates are the l1 norms of that combination.
    """
    tails, heads, lin, Z = _relative_terms(state, g, params)
    C, rates = kernels.sign_coupling(Z, tails, heads, state.edge_beta(g), 0.0)
    return (phi_double(bundles) if phi is None else phi) - lin - C, rates


def continuous_double_step(state: TeamState, bundles: DerivativeBundle, g: Graph,
                           params: GainParams, layer: LayerSpec | None = None,
                           phi: np.ndarray | None = None):
    """:func:`distributed_double_step` with the signum replaced by the
    boundary-layer field; gain rates become ``z^T h(z) >= 0``.
    """
    layer = params.layer if layer is None else layer
    tails, heads, lin, Z = _relative_terms(state, g, params)
    C, rates = kernels.layer_coupling(Z, tails, heads, state.edge_beta(g), layer.width(state.t))
    return (phi_double(bundles) if phi is None else phi) - lin - C, rates


class DoubleEstimatorRates(NamedTuple):
    xi_dot: np.ndarray
    phi_dot: np.ndarray
    S: np.ndarray
    U: np.ndarray
    estimates: tuple[np.ndarray, np.ndarray] = ()


def estimator_double_step(state: TeamState, bundles: DerivativeBundle, g: Graph,
                          params: GainParams) -> DoubleEstimatorRates:
    m = state.m
    xi, phi = state.est_double
    psi_sig = np.concatenate([bundles.grad, bundles.pt_grad, bundles.dt_grad,
                              bundles.pt_dt_grad], axis=1)
    theta_sig = np.concatenate([bundles.hess, bundles.dt_hess], axis=1)
    w = xi + psi_sig
    vs = phi + theta_sig
    w1, w2, w3, w4 = (w[:, k * m:(k + 1) * m] for k in range(4))
    h1, h1_inv = _pd_inverse(vs[:, :m, :], params.pd_floor)
    h2 = vs[:, m:, :]
    S = (_mv(h1_inv, _mv(h2, _mv(h1_inv, w1 + w2)))
         - _mv(h1_inv, w3 + w4)
         - _mv(h1, w1))
    tails, heads = g.tails_heads()
    unit = _unit(g)
    Cx, _ = kernels.sign_coupling(_c(state.X), tails, heads, unit, params.alpha1)
    Cv, _ = kernels.sign_coupling(_c(state.V), tails, heads, unit, params.velocity_exponent)
    # both trackers share one signum pass over the stacked signals
    n = w.shape[0]
    both, _ = kernels.sign_coupling(np.concatenate([w, vs.reshape(n, -1)], axis=1),
                                    tails, heads, unit, 0.0)
    return DoubleEstimatorRates(
        xi_dot=-params.kappa * both[:, :4 * m],
        phi_dot=(-params.rho * both[:, 4 * m:]).reshape(vs.shape),
        S=S,
        U=S - Cx - Cv,
        estimates=(w, vs),
    )


def fmt_num(x: float, digits: int = 3) -> str:
    """``digits`` significant digits, keeping a decimal point on whole numbers."""
    txt = f"{x:.{digits}g}"
    if txt.lstrip("-").isdigit():
        txt += ".0"
    return txt


@dataclass(frozen=True)
class Condition:
    """Strict inequality ``lhs < rhs`` between two labelled quantities."""

    lhs_label: str
    lhs: float
    rhs_label: str
    rhs: float

    @property
    def passed(self) -> bool:
        return bool(self.lhs < self.rhs)

    @property
    def margin(self) -> float:
        return float(self.rhs - self.lhs)

    def line(self) -> str:
        op = "<" if self.passed else ">="
        digits = 3
        while digits < 15 and fmt_num(self.lhs, digits) == fmt_num(self.rhs, digits) \
                and self.lhs != self.rhs:
            digits += 1
        return (f"{self.lhs_label} = {fmt_num(self.lhs, digits)} {op} {self.rhs_label} = "
                f"{fmt_num(self.rhs, digits)} : {'PASS' if self.passed else 'FAIL'}")

    def to_dict(self) -> dict:
        return {"lhs_label": self.lhs_label, "lhs": self.lhs, "rhs_label": self.rhs_label,
                "rhs": self.rhs, "passed": self.passed, "margin": self.margin,
                "text": self.line()}


@dataclass(frozen=True)
class GainReport:
    conditions: tuple[Condition, ...]
    psi: float | None
    psi_searched: bool = False

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "psi": self.psi, "psi_searched": self.psi_searched,
                "conditions": [c.to_dict() for c in self.conditions]}


PSI_GRID = 1000


def _psi_upper(params: GainParams, lam2: float) -> float:
    a, z, gm, mu = params.alpha, params.zeta, params.gamma, params.mu
    return min(gm / (2 * z), mu / (2 * a), (lam2 - gm / (a * z)) * a)


def check_gain_conditions(params: GainParams, lambda2: float, psi: float | None = None,
                          boundary: bool = False) -> GainReport:
    """Consensus condition ``gamma/(alpha zeta) < lambda2`` and, for
    boundary-layer laws, the three inequalities involving ``psi``.

    Without ``psi`` the largest feasible value on a uniform grid of
    ``PSI_GRID`` points below the binding bound is reported.
    """
    a, z, gm, mu = params.alpha, params.zeta, params.gamma, params.mu
    conds = [Condition("γ/(αζ)", gm / (a * z), "λ₂", lambda2)]
    searched = False
    if boundary:
        if psi is None:
            searched = True
            upper = _psi_upper(params, lambda2)
            psi = upper * (1.0 - 1.0 / PSI_GRID) if upper > 0 else None
        if psi is None or psi <= 0:
            conds.append(Condition("0", 0.0, "largest feasible ψ", 0.0 if psi is None else psi))
        else:
            conds += [
                Condition("γ/(αζ) + ψ/α", gm / (a * z) + psi / a, "λ₂", lambda2),
                Condition("ψ", psi, "μ/(2α)", mu / (2 * a)),
                Condition("ψ", psi, "γ/(2ζ)", gm / (2 * z)),
            ]
    return GainReport(tuple(conds), psi, searched)


def consensus_p_extremes(params: GainParams, g: Graph, psi: float = 0.0) -> tuple[float, float]:
    """Extreme eigenvalues of the error-energy matrix restricted to consensus errors.

    The matrix is ``[[(alpha gamma + mu zeta) L - 2 psi gamma I, gamma I],
    [gamma I, zeta I]]`` (Kronecker with ``I_m``). On the full space it is
    indefinite because ``L`` is singular; on mean-zero errors it splits into
    2x2 blocks, one per nonzero Laplacian eigenvalue.
    """
    ev = jacobi_eigvalsh(laplacian(g))[1:]
    if g.n < 2 or ev.size == 0 or ev[0] <= 1e-9:
        raise ValueError("graph must be connected with at least two agents")
    a, z, gm, mu = params.alpha, params.zeta, params.gamma, params.mu
    p11 = (a * gm + mu * z) * ev - 2.0 * psi * gm
    tr, det = p11 + z, p11 * z - gm * gm
    disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
    return float(np.min(tr / 2 - disc)), float(np.max(tr / 2 + disc))


def fixed_layer_error_bound(params: GainParams, n: int, m: int, phi_bar: float, psi: float,
                            g: Graph) -> float:
    """Steady tracking-error bound of the fixed boundary layer:
    ``sqrt(phi_bar N (N-1)^2 eps / (4 psi lambda_min))``.
    """
    if psi <= 0:
        raise ValueError("psi must be positive")
    lam_min, _ = consensus_p_extremes(params, g, psi)
    if lam_min <= 0:
        raise ValueError(f"error-energy matrix not positive definite (lambda_min = {lam_min:.3g})")
    eps = params.layer.epsilon
    return float(np.sqrt(phi_bar * n * (n - 1) ** 2 * eps / (4.0 * psi * lam_min)))
