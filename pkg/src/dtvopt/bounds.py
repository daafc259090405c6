"""Bounds on internal-signal disagreement for identical-Hessian teams.

With ``grad f_i = H x_i + b_i(t)`` and ``b_i = 2 A_i^T g_i``, differences of
internal signals depend only on relative states and on ``b_i - b_j``.
"""

from __future__ import annotations

import numpy as np

from .costs import AssumptionError, TeamCost, signal_bounds, signal_difference_bounds


def _require_identical(team: TeamCost) -> np.ndarray:
    if not team.identical_hessians():
        raise AssumptionError("internal-signal bounds need identical Hessians across agents")
    if team.hess_inv is None:
        raise AssumptionError("internal-signal bounds need invertible Hessians")
    return team.hess[0]


def offset_difference_bounds(team: TeamCost) -> tuple[float, float, float]:
    """Bounds on ``||b_i - b_j||_2`` and its first two time derivatives."""
    scale = max(np.linalg.norm(team.At2[i], 2) for i in range(team.n))
    if np.all(team.A == team.A[0]):
        diffs = signal_difference_bounds(team.costs)
    else:
        # different scalings: fall back to the triangle inequality
        diffs = tuple(2.0 * b for b in signal_bounds(team.costs))
    return tuple(float(scale * d) for d in diffs)


def single_phi_bar(team: TeamCost, beta_x: float) -> float:
    """Bound on ``||phi_i - phi_j||_2`` given ``||x_i - x_j|| <= beta_x``."""
    H = _require_identical(team)
    db, dbd, _ = offset_difference_bounds(team)
    hinv = np.linalg.norm(np.linalg.inv(H), 2)
    return float(beta_x + hinv * (db + dbd))


def double_phi_bar(team: TeamCost, beta_x: float, beta_v: float) -> float:
    """Same for the second-order signal, given a relative-velocity bound too."""
    H = _require_identical(team)
    db, dbd, dbdd = offset_difference_bounds(team)
    h = np.linalg.norm(H, 2)
    hinv = np.linalg.norm(np.linalg.inv(H), 2)
    return float(beta_v + h * h * beta_x + hinv * (dbdd + dbd) + h * db)
