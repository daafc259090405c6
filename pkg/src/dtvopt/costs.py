"""
Time-varying quadratic costs ``f_i(x, t) = ||A_i x + g_i(t)||^2``.

Every derivative the controllers consume is available in closed form, so
no numerical differentiation happens on the simulation path. ``fd_check``
is the independent finite-difference oracle used by the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

SIGNAL_KINDS = ("sin", "cos", "damped", "const")
_KIND_CODE = {k: c for c, k in enumerate(SIGNAL_KINDS)}


class AssumptionError(ValueError):
    """Raised when a cost violates an invertibility requirement of a law."""


@dataclass(frozen=True)
class TimeSignal:
    """Scalar signal of time with exact first and second derivatives.

    ========  =========================================
    kind      value
    ========  =========================================
    sin       ``amp*sin(omega*t + phase) + offset``
    cos       ``amp*cos(omega*t + phase) + offset``
    damped    ``amp*sin(omega*t + phase)/(t + 1) + offset``
    const     ``offset``
    ========  =========================================
    """

    kind: str = "const"
    amp: float = 0.0
    omega: float = 0.0
    phase: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"unknown signal kind {self.kind!r}; expected one of {SIGNAL_KINDS}")

    def value(self, t: float) -> float:
        return float(_eval_signals(self._params(), t)[0][0])

    def d1(self, t: float) -> float:
        return float(_eval_signals(self._params(), t)[1][0])

    def d2(self, t: float) -> float:
        return float(_eval_signals(self._params(), t)[2][0])

    def _params(self):
        return tuple(np.array([v], dtype=float) for v in
                     (_KIND_CODE[self.kind], self.amp, self.omega, self.phase, self.offset))

    def bounds(self) -> tuple[float, float, float]:
        """Upper bounds on ``sup_t |g|``, ``sup_t |g'|``, ``sup_t |g''|`` over ``t >= 0``."""
        a, w, b = abs(self.amp), abs(self.omega), abs(self.offset)
        if self.kind in ("sin", "cos"):
            return a + b, a * w, a * w * w
        if self.kind == "damped":
            return a + b, a * (w + 1.0), a * (w * w + 2.0 * w + 2.0)
        return b, 0.0, 0.0

    def minus(self, other: "TimeSignal") -> "TimeSignal | None":
        """Exact difference when both signals share a shape, else ``None``."""
        if self.kind == "const" and other.kind == "const":
            return TimeSignal("const", offset=self.offset - other.offset)
        if (self.kind, self.omega, self.phase) == (other.kind, other.omega, other.phase):
            return TimeSignal(self.kind, self.amp - other.amp, self.omega, self.phase,
                              self.offset - other.offset)
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "amp": self.amp, "omega": self.omega,
                "phase": self.phase, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeSignal":
        unknown = set(d) - {"kind", "amp", "omega", "phase", "offset"}
        if unknown:
            raise ValueError(f"unknown signal fields {sorted(unknown)}")
        return cls(kind=d.get("kind", "const"), amp=float(d.get("amp", 0.0)),
                   omega=float(d.get("omega", 0.0)), phase=float(d.get("phase", 0.0)),
                   offset=float(d.get("offset", 0.0)))


def _eval_signals(params, t):
    """Value, first and second derivative of stacked signals at time ``t``."""
    shape = params[0].shape
    flat = [np.ascontiguousarray(p, dtype=float).reshape(-1) for p in params]
    val, d1, d2 = kernels.eval_signals(*flat, float(t))
    return val.reshape(shape), d1.reshape(shape), d2.reshape(shape)


@dataclass(frozen=True)
class DerivativeBundle:
    """Derivatives of one cost (or a stack of costs along axis 0).

    ``dt_grad`` is the total derivative ``hess @ v + pt_grad`` and
    ``pt_dt_grad`` its partial in ``t`` at fixed ``(x, v)``.
    """

    f: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    pt_grad: np.ndarray
    dt_grad: np.ndarray
    pt_dt_grad: np.ndarray
    dt_hess: np.ndarray
    hess_inv: np.ndarray | None = None

    def total(self) -> "DerivativeBundle":
        """Sum a stacked bundle over agents (team cost at shared arguments)."""
        fields = {k: np.sum(getattr(self, k), axis=0) for k in
                  ("f", "grad", "hess", "pt_grad", "dt_grad", "pt_dt_grad", "dt_hess")}
        return DerivativeBundle(**fields)


class CostModel:
    """``f(x, t) = ||A x + g(t)||_2^2`` with closed-form signals ``g``."""

    def __init__(self, A, g: Sequence[TimeSignal]):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if len(g) != A.shape[0]:
            raise ValueError(f"g has {len(g)} components but A is {A.shape[0]}x{A.shape[0]}")
        self.A = A
        self.g = tuple(g)
        self.m = A.shape[0]
        self._params = tuple(np.array(col, dtype=float) for col in zip(
            *[(_KIND_CODE[s.kind], s.amp, s.omega, s.phase, s.offset) for s in self.g]))

    @property
    def hessian(self) -> np.ndarray:
        return 2.0 * self.A.T @ self.A

    @property
    def has_invertible_hessian(self) -> bool:
        return bool(np.linalg.matrix_rank(self.A) == self.m)

    def signals(self, t: float):
        return _eval_signals(self._params, t)

    def value(self, x, t: float) -> float:
        r = self.A @ np.asarray(x, dtype=float) + self.signals(t)[0]
        return float(r @ r)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "g": [s.to_dict() for s in self.g]}

    @classmethod
    def from_dict(cls, d: dict) -> "CostModel":
        return cls(d["A"], [TimeSignal.from_dict(s) for s in d["g"]])

    def __repr__(self):
        return f"CostModel(A={self.A.tolist()}, g={list(self.g)})"


def derivatives(c: CostModel, x, v, t: float) -> DerivativeBundle:
    """Exact derivative bundle of ``c`` at position ``x``, velocity ``v``, time ``t``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    g, gd, gdd = c.signals(t)
    At2 = 2.0 * c.A.T
    r = c.A @ x + g
    hess = At2 @ c.A
    pt_grad = At2 @ gd
    return DerivativeBundle(
        f=np.float64(r @ r),
        grad=At2 @ r,
        hess=hess,
        pt_grad=pt_grad,
        dt_grad=hess @ v + pt_grad,
        pt_dt_grad=At2 @ gdd,
        dt_hess=np.zeros_like(hess),
    )


def _mv(M, X):
    """Row-wise matrix-vector products ``M[i] @ X[i]``."""
    return np.matmul(M, X[..., np.newaxis])[..., 0]


class TeamCost:
    """Vectorised evaluation of all agents' costs at once.

    Hessians are constant for this family, so their inverses are cached.
    """

    def __init__(self, costs: Sequence[CostModel]):
        if not costs:
            raise ValueError("team needs at least one cost")
        m = costs[0].m
        if any(c.m != m for c in costs):
            raise ValueError("all costs must share the same dimension")
        self.costs = tuple(costs)
        self.n = len(costs)
        self.m = m
        self.A = np.stack([c.A for c in costs])
        self.At2 = 2.0 * np.transpose(self.A, (0, 2, 1))
        self.hess = self.At2 @ self.A
        self._params = tuple(np.stack(p) for p in zip(*[c._params for c in costs]))
        self._flat = tuple(np.ascontiguousarray(p, dtype=float).reshape(-1) for p in self._params)
        self.invertible = np.array([c.has_invertible_hessian for c in costs])
        self.hess_inv = None
        if self.invertible.all():
            self.hess_inv = np.linalg.inv(self.hess)
        hs = self.hess.sum(axis=0)
        self.team_hess_inv = None
        if np.linalg.matrix_rank(hs) == m:
            self.team_hess_inv = np.linalg.inv(hs)

    def signals(self, t: float):
        shape = (self.n, self.m)
        val, d1, d2 = kernels.eval_signals(*self._flat, float(t))
        return val.reshape(shape), d1.reshape(shape), d2.reshape(shape)

    def bundles(self, X, V, t: float) -> DerivativeBundle:
        """Stacked bundle, one row per agent, each at its own ``(x_i, v_i)``."""
        g, gd, gdd = self.signals(t)
        r = _mv(self.A, X) + g
        pt_grad = _mv(self.At2, gd)
        dt_grad = pt_grad if V is None else _mv(self.hess, V) + pt_grad
        return DerivativeBundle(
            f=np.sum(r * r, axis=1),
            grad=_mv(self.At2, r),
            hess=self.hess,
            pt_grad=pt_grad,
            dt_grad=dt_grad,
            pt_dt_grad=_mv(self.At2, gdd),
            dt_hess=np.zeros_like(self.hess),
            hess_inv=self.hess_inv,
        )

    def team_bundle(self, x, v, t: float) -> DerivativeBundle:
        """Bundle of the summed cost at one shared ``(x, v)``."""
        X = np.broadcast_to(np.asarray(x, dtype=float), (self.n, self.m))
        V = None if v is None else np.broadcast_to(np.asarray(v, dtype=float), (self.n, self.m))
        b = self.bundles(X, V, t).total()
        if V is None:
            b = DerivativeBundle(**{**b.__dict__, "dt_grad": b.pt_grad})
        return b

    def team_bundles(self, X, V, t: float) -> DerivativeBundle:
        """Summed-cost bundle evaluated separately at every row of ``X`` (and ``V``)."""
        g, gd, gdd = self.signals(t)
        hs = self.hess.sum(axis=0)
        c0 = np.einsum("nij,nj->i", self.At2, g)
        c1 = np.einsum("nij,nj->i", self.At2, gd)
        c2 = np.einsum("nij,nj->i", self.At2, gdd)
        k = X.shape[0]
        pt_grad = np.broadcast_to(c1, (k, self.m)).copy()
        r = np.einsum("nij,kj->kni", self.A, X) + g[np.newaxis]
        return DerivativeBundle(
            f=np.einsum("kni,kni->k", r, r),
            grad=X @ hs.T + c0,
            hess=np.broadcast_to(hs, (k, self.m, self.m)),
            pt_grad=pt_grad,
            dt_grad=pt_grad if V is None else V @ hs.T + c1,
            pt_dt_grad=np.broadcast_to(c2, (k, self.m)).copy(),
            dt_hess=np.zeros((k, self.m, self.m)),
            hess_inv=None if self.team_hess_inv is None
            else np.broadcast_to(self.team_hess_inv, (k, self.m, self.m)),
        )

    def gradient_sum(self, X, t: float) -> np.ndarray:
        g = self.signals(t)[0]
        r = np.einsum("nij,nj->ni", self.A, X) + g
        return np.einsum("nij,nj->ni", self.At2, r).sum(axis=0)

    def optimum(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        M = np.einsum("nji,njk->ik", self.A, self.A)
        if np.linalg.matrix_rank(M) < self.m:
            raise AssumptionError(
                "summed Hessian is singular: the team cost has no unique minimizer")
        g, gd, _ = self.signals(t)
        b = np.einsum("nji,nj->i", self.A, g)
        bd = np.einsum("nji,nj->i", self.A, gd)
        return -np.linalg.solve(M, b), -np.linalg.solve(M, bd)

    def identical_hessians(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.hess - self.hess[0]) <= tol))


def team_optimum(costs: Sequence[CostModel], t: float) -> tuple[np.ndarray, np.ndarray]:
    """Minimiser ``x*(t)`` of the summed cost and its exact velocity ``v*(t)``."""
    return TeamCost(costs).optimum(t)


def _grad(c: CostModel, x, t):
    return derivatives(c, x, np.zeros(c.m), t).grad


def fd_check(c: CostModel, x, v, t: float, h: float = 1e-5) -> float:
    """Worst mixed relative error of the analytic bundle vs central differences.

    Each entry's error is ``|analytic - numeric| / max(1, |numeric|)`` in
    the sup norm. The gradient is checked against differences of ``f``;
    every other member is checked against differences of the gradient. The
    nested second-order difference uses the wider step ``sqrt(h)`` and one
    Richardson extrapolation.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    m = c.m
    b = derivatives(c, x, v, t)
    E = np.eye(m)

    num_grad = np.array([(c.value(x + h * E[k], t) - c.value(x - h * E[k], t)) / (2 * h)
                         for k in range(m)])
    num_hess = np.column_stack([(_grad(c, x + h * E[k], t) - _grad(c, x - h * E[k], t)) / (2 * h)
                                for k in range(m)])
    num_pt_grad = (_grad(c, x, t + h) - _grad(c, x, t - h)) / (2 * h)

    def total_rate(tt):
        return (_grad(c, x + h * v, tt + h) - _grad(c, x - h * v, tt - h)) / (2 * h)

    def outer(step):
        return (total_rate(t + step) - total_rate(t - step)) / (2 * step)

    h2 = np.sqrt(h)
    num_dt_grad = total_rate(t)
    # one Richardson step lifts the nested difference to fourth order
    num_pt_dt_grad = (4.0 * outer(h2 / 2) - outer(h2)) / 3.0
    num_dt_hess = (derivatives(c, x, v, t + h).hess - derivatives(c, x, v, t - h).hess) / (2 * h)

    def err(a, n):
        a, n = np.asarray(a), np.asarray(n)
        return float(np.max(np.abs(a - n) / np.maximum(1.0, np.abs(n)), initial=0.0))

    return max(err(b.grad, num_grad), err(b.hess, num_hess), err(b.pt_grad, num_pt_grad),
               err(b.dt_grad, num_dt_grad), err(b.pt_dt_grad, num_pt_dt_grad),
               err(b.dt_hess, num_dt_hess))


def preset_costs(name: str, n: int = 6) -> list[CostModel]:
    """The three benchmark families, agents numbered ``i = 1..n``.

    ``fig1``: ``(x - i sin t)^2 + (y - i cos t)^2``
    ``fig3``: ``(x/i - sin t)^2 + (y/i - cos t)^2``
    ``fig5``: ``(x + 2i sin(t/2)/(t+1))^2 + (y + i sin(t/10))^2``
    """
    out = []
    for i in range(1, n + 1):
        if name == "fig1":
            out.append(CostModel(np.eye(2), [TimeSignal("sin", -i, 1.0),
                                              TimeSignal("cos", -i, 1.0)]))
        elif name == "fig3":
            out.append(CostModel(np.eye(2) / i, [TimeSignal("sin", -1.0, 1.0),
                                                  TimeSignal("cos", -1.0, 1.0)]))
        elif name == "fig5":
            out.append(CostModel(np.eye(2), [TimeSignal("damped", 2.0 * i, 0.5),
                                              TimeSignal("sin", float(i), 0.1)]))
        else:
            raise ValueError(f"unknown cost preset {name!r}; expected fig1, fig3 or fig5")
    return out


def signal_difference_bounds(costs: Sequence[CostModel]) -> tuple[float, float, float]:
    """Bounds on ``max_ij sup_t ||g_i - g_j||_2`` and its first two derivatives."""
    best = np.zeros(3)
    for i in range(len(costs)):
        for j in range(i + 1, len(costs)):
            comp = np.zeros((costs[i].m, 3))
            for k, (si, sj) in enumerate(zip(costs[i].g, costs[j].g)):
                d = si.minus(sj)
                comp[k] = d.bounds() if d is not None else np.add(si.bounds(), sj.bounds())
            best = np.maximum(best, np.sqrt(np.sum(comp ** 2, axis=0)))
    return tuple(float(b) for b in best)


def signal_bounds(costs: Sequence[CostModel]) -> tuple[float, float, float]:
    """Bounds on ``max_i sup_t ||g_i||_2`` and its first two derivatives."""
    best = np.zeros(3)
    for c in costs:
        comp = np.array([s.bounds() for s in c.g])
        best = np.maximum(best, np.sqrt(np.sum(comp ** 2, axis=0)))
    return tuple(float(b) for b in best)
