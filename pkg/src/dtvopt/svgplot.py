"""Dependency-free SVG figures: planar trajectories beside log-scale metric curves."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
           "#17becf", "#bcbd22", "#7f7f7f")
PLOT_METRICS = ("track_max", "consensus_x", "consensus_v", "center_err", "est_err", "grad_sum")
MAX_POINTS = 1500

_W, _H = 980, 440
_PANEL = 380
_MARGIN = 50


def _thin(idx_count: int) -> np.ndarray:
    if idx_count <= MAX_POINTS:
        return np.arange(idx_count)
    return np.unique(np.linspace(0, idx_count - 1, MAX_POINTS).round().astype(int))


def _polyline(xs, ys, color: str, width: float = 1.4, dash: str | None = None) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{extra} '
            f'points="{pts}"/>')


def _text(x, y, s, size=11, anchor="middle", color="#222") -> str:
    return (f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" text-anchor="{anchor}" '
            f'fill="{color}" font-family="sans-serif">{escape(s)}</text>')


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    step = 10 ** math.floor(math.log10(span / count))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= count:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    return [first + k * step for k in range(int((hi - first) / step + 1e-9) + 1)]


def _plane_panel(X: np.ndarray, xstar: np.ndarray, x0: float, y0: float) -> list[str]:
    """Rows of ``X`` are samples ``(T, n, >=2)``; only the first two coordinates are drawn."""
    out = [f'<rect x="{x0}" y="{y0}" width="{_PANEL}" height="{_PANEL}" fill="white" '
           f'stroke="#444"/>']
    pts = np.concatenate([X[:, :, :2].reshape(-1, 2), xstar[:, :2]])
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if pts.size == 0:
        return out
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    half = 0.55 * max(float(np.max(hi - lo)), 1e-9)
    mid = 0.5 * (lo + hi)
    lo, hi = mid - half, mid + half

    def sx(v):
        return x0 + (v - lo[0]) / (hi[0] - lo[0]) * _PANEL

    def sy(v):
        return y0 + _PANEL - (v - lo[1]) / (hi[1] - lo[1]) * _PANEL

    for tk in _nice_ticks(lo[0], hi[0]):
        out.append(_text(sx(tk), y0 + _PANEL + 14, f"{tk:g}", 10))
    for tk in _nice_ticks(lo[1], hi[1]):
        out.append(_text(x0 - 5, sy(tk) + 3, f"{tk:g}", 10, "end"))
    keep = _thin(X.shape[0])
    for i in range(X.shape[1]):
        color = PALETTE[i % len(PALETTE)]
        out.append(_polyline(sx(X[keep, i, 0]), sy(X[keep, i, 1]), color, 1.2))
        out.append(f'<circle cx="{sx(X[0, i, 0]):.2f}" cy="{sy(X[0, i, 1]):.2f}" r="3" '
                   f'fill="none" stroke="{color}"/>')
        out.append(f'<circle cx="{sx(X[-1, i, 0]):.2f}" cy="{sy(X[-1, i, 1]):.2f}" r="3" '
                   f'fill="{color}"/>')
    out.append(_polyline(sx(xstar[keep, 0]), sy(xstar[keep, 1]), "#000", 1.6, "6,4"))
    out.append(_text(x0 + _PANEL / 2, y0 - 8, "positions (dashed: optimum)", 12))
    return out


def _metric_panel(times: np.ndarray, metrics: dict[str, np.ndarray], x0: float,
                  y0: float) -> list[str]:
    out = [f'<rect x="{x0}" y="{y0}" width="{_PANEL}" height="{_PANEL}" fill="white" '
           f'stroke="#444"/>']
    series = {}
    for name in PLOT_METRICS:
        v = metrics.get(name)
        if v is None:
            continue
        v = np.asarray(v, dtype=float)
        if not np.any(np.isfinite(v) & (v > 0)):
            continue
        series[name] = np.log10(np.clip(np.where(np.isfinite(v), v, np.nan), 1e-16, None))
    out.append(_text(x0 + _PANEL / 2, y0 - 8, "metrics (log scale)", 12))
    if not series or times.size < 2:
        return out
    allv = np.concatenate([s[np.isfinite(s)] for s in series.values()])
    lo, hi = math.floor(allv.min()), math.ceil(allv.max())
    hi = max(hi, lo + 1)
    t0, t1 = float(times[0]), float(times[-1])
    t1 = t1 if t1 > t0 else t0 + 1.0

    def sx(t):
        return x0 + (t - t0) / (t1 - t0) * _PANEL

    def sy(v):
        return y0 + _PANEL - (v - lo) / (hi - lo) * _PANEL

    step = max(1, (hi - lo) // 8)
    for e in range(lo, hi + 1, step):
        out.append(f'<line x1="{x0}" x2="{x0 + _PANEL}" y1="{sy(e):.2f}" y2="{sy(e):.2f}" '
                   f'stroke="#ddd"/>')
        out.append(_text(x0 - 5, sy(e) + 3, f"1e{e}", 10, "end"))
    for tk in _nice_ticks(t0, t1):
        out.append(_text(sx(tk), y0 + _PANEL + 14, f"{tk:g}", 10))
    keep = _thin(times.size)
    for k, (name, s) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        ok = keep[np.isfinite(s[keep])]
        if ok.size:
            out.append(_polyline(sx(times[ok]), sy(s[ok]), color))
        ly = y0 + 14 + 14 * k
        out.append(f'<line x1="{x0 + _PANEL - 120}" x2="{x0 + _PANEL - 100}" y1="{ly - 4}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(_text(x0 + _PANEL - 95, ly, name, 10, "start"))
    out.append(_text(x0 + _PANEL / 2, y0 + _PANEL + 30, "t", 11))
    return out


def render_svg(times, X, xstar, metrics: dict[str, np.ndarray], title: str = "") -> str:
    """SVG document for one run; ``X`` has shape ``(T, n, m)``, ``xstar`` ``(T, m)``."""
    times = np.asarray(times, dtype=float)
    X = np.asarray(X, dtype=float)
    xstar = np.asarray(xstar, dtype=float)
    if X.shape[2] < 2:
        # scalar agents: plot the state against time instead of a plane
        X = np.concatenate([np.broadcast_to(times[:, None, None], X.shape), X], axis=2)
        xstar = np.column_stack([times, xstar[:, 0]])
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}">',
             f'<rect width="{_W}" height="{_H}" fill="#fafafa"/>']
    if title:
        parts.append(_text(_W / 2, 18, title, 14))
    parts += _plane_panel(X, xstar, _MARGIN + 10, 36)
    parts += _metric_panel(times, metrics, _MARGIN + _PANEL + 130, 36)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
