"""Pre-run condition checks: connectivity, gain inequalities and certified bounds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controllers import Condition, check_gain_conditions, fixed_layer_error_bound, fmt_num
from .costs import AssumptionError
from .graph import is_connected, lambda2
from .sim import Problem, appendix_gain_bounds
from .swarm import PotentialSpec, swarm_beta_bound, swarm_phi_bar

DISCONNECTED = "disconnected: theorems inapplicable"


@dataclass
class CheckReport:
    lines: list[str] = field(default_factory=list)
    data: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """No warnings and every checked inequality holds."""
        return not self.warnings

    def to_dict(self) -> dict:
        return {"lines": list(self.lines), "warnings": list(self.warnings), **self.data}


def _condition(rep: CheckReport, cond: Condition, warn: bool = True):
    rep.lines.append(cond.line())
    if warn and not cond.passed:
        rep.warnings.append(cond.line())


def check_problem(problem: Problem) -> CheckReport:
    """Everything decidable before integrating, evaluated at ``t = 0``."""
    rep = CheckReport()
    info = problem.info
    n, m = problem.X0.shape
    g = problem.graph_at(problem.X0)
    kind = "proximity" if problem.graph is None else "fixed"
    connected = is_connected(g)
    lam2 = lambda2(g) if n >= 2 else 0.0
    rep.data.update(graph=kind, edges=g.num_edges, connected=connected, lambda2=lam2)
    rep.lines.append(f"graph: {kind}, {g.num_edges} edges, "
                     f"{'connected' if connected else 'not connected'} at t = 0")
    rep.lines.append(f"λ₂ = {fmt_num(lam2)}")
    if info.centralized:
        rep.lines.append("centralized law: no communication conditions")
        return rep
    if not connected:
        rep.lines.append(DISCONNECTED)
        rep.warnings.append(DISCONNECTED)
        return rep

    psi = None
    if info.order == 2 and info.adaptive:
        gains = check_gain_conditions(problem.params, lam2, psi=problem.params.psi,
                                      boundary=info.boundary)
        rep.data["gain_conditions"] = gains.to_dict()
        for c in gains.conditions:
            _condition(rep, c)
        if gains.psi is not None and gains.psi_searched:
            rep.lines.append(f"ψ = {fmt_num(gains.psi, 6)} (largest grid value)")
        psi = gains.psi if info.boundary else None

    if info.adaptive:
        try:
            ab = appendix_gain_bounds(problem.X0, problem.V0, problem.team, problem.params, g,
                                      psi=psi or 0.0)
        except (AssumptionError, ValueError) as exc:
            rep.lines.append(f"appendix bounds unavailable: {exc}")
        else:
            rep.data["appendix"] = ab.to_dict()
            parts = [f"β_x = {fmt_num(ab.beta_x)}"]
            if ab.beta_v is not None:
                parts.append(f"β_v = {fmt_num(ab.beta_v)}")
            parts += [f"φ̄ = {fmt_num(ab.phi_bar)}", f"β̄ = {fmt_num(ab.beta_bar)}"]
            rep.lines.append("appendix bounds: " + ", ".join(parts))
            if info.boundary and problem.params.layer.c == 0 and psi:
                bound = fixed_layer_error_bound(problem.params, n, m, ab.phi_bar, psi, g)
                rep.data["steady_error_bound"] = bound
                rep.lines.append(f"steady tracking error bound = {fmt_num(bound)}")

    if info.swarm:
        sw = problem.swarm
        try:
            sb = swarm_beta_bound(problem.X0, problem.team, sw.R)
        except AssumptionError as exc:
            rep.lines.append(f"swarm β bound unavailable: {exc}")
        else:
            rep.data["swarm_bound"] = sb.to_dict()
            rep.lines.append(f"swarm bounds: β_x = {fmt_num(sb.beta_x)}, "
                             f"sup ||φ_i||_1 <= {fmt_num(sb.phi_sup)}")
            # the certified level is conservative; a smaller configured gain may still work
            _condition(rep, Condition("certified swarm β", sb.beta, "configured β", sw.beta),
                       warn=False)
        if info.order == 2:
            spec = PotentialSpec.from_positions(problem.X0, sw.R, sw.d)
            try:
                bx, bv, pb = swarm_phi_bar(problem.X0, problem.V0, problem.team, spec)
            except AssumptionError as exc:
                rep.lines.append(f"swarm φ̄ unavailable: {exc}")
            else:
                rep.data["swarm_phi_bar"] = {"beta_x": bx, "beta_v": bv, "phi_bar": pb}
                rep.lines.append(f"swarm separation bounds: β_x = {fmt_num(bx)}, "
                                 f"β_v = {fmt_num(bv)}, φ̄ = {fmt_num(pb)}")
    if not np.isfinite(lam2):
        rep.warnings.append("λ₂ is not finite")
    return rep
