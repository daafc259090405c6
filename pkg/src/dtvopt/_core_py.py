"""Numpy implementations of the per-step edge kernels.

Used when the compiled ``_core`` extension is unavailable, and as the
reference the compiled kernels are tested against. Every kernel walks the
edge list ``(tails[k], heads[k])`` in order.
"""

import numpy as np


class CollisionError(RuntimeError):
    pass


def _sig(D, alpha):
    if alpha == 0.0:
        return np.sign(D)
    if alpha == 1.0:
        return D
    return np.sign(D) * np.abs(D) ** alpha


def sign_coupling(Z, tails, heads, gains, alpha):
    """``C_i = sum_k +-gains_k * sig(z_tail - z_head, alpha)`` and per-edge l1 rates.

    Tails receive ``+``, heads ``-``; the coupling input is ``-C``.
    """
    D = Z[tails] - Z[heads]
    S = _sig(D, alpha) * gains[:, np.newaxis]
    C = np.zeros_like(Z)
    np.add.at(C, tails, S)
    np.subtract.at(C, heads, S)
    return C, np.abs(D).sum(axis=1)


def layer_coupling(Z, tails, heads, gains, width):
    """Boundary-layer analogue of :func:`sign_coupling`.

    Rates are ``d^T h(d)`` with ``h(d) = d / (||d|| + width)``.
    """
    D = Z[tails] - Z[heads]
    nrm = np.sqrt(np.sum(D * D, axis=1))
    den = nrm + width
    scale = np.divide(1.0, den, out=np.zeros_like(den), where=den > 0)
    H = D * scale[:, np.newaxis]
    C = np.zeros_like(Z)
    S = H * gains[:, np.newaxis]
    np.add.at(C, tails, S)
    np.subtract.at(C, heads, S)
    return C, nrm * nrm * scale


def potential_coupling(X, tails, heads, connected, R, d):
    """``C_i = sum_j dV_ij/dx_i`` over the listed edges, plus the smallest edge length."""
    D = X[tails] - X[heads]
    s = np.sqrt(np.sum(D * D, axis=1))
    if s.size and s.min() <= 0.0:
        k = int(np.argmin(s))
        raise CollisionError(f"agents {tails[k] + 1} and {heads[k] + 1} collided")
    conn = connected[tails, heads].astype(bool)
    p_conn = (s - d) * (1.0 / (s * s) + 1.0 / np.maximum(R - s, 1e-300) ** 2)
    p_conn = np.where(s < R, p_conn, np.inf)
    p_free = np.where(s < R, (s - d) / (s * s) * (R - s) / (R - d), 0.0)
    p = np.where(conn, p_conn, p_free)
    S = D * (p / s)[:, np.newaxis]
    C = np.zeros_like(X)
    np.add.at(C, tails, S)
    np.subtract.at(C, heads, S)
    return C, (float(s.min()) if s.size else np.inf)


def proximity_edges(X, R):
    diff = X[:, np.newaxis, :] - X[np.newaxis, :, :]
    dist2 = np.sum(diff * diff, axis=-1)
    iu, ju = np.triu_indices(X.shape[0], 1)
    keep = dist2[iu, ju] < R * R
    return np.ascontiguousarray(iu[keep]), np.ascontiguousarray(ju[keep])


def pair_distance_range(X):
    """Smallest and largest pairwise 2-norm distance (``inf, 0`` below two rows)."""
    n = X.shape[0]
    if n < 2:
        return np.inf, 0.0
    diff = X[:, np.newaxis, :] - X[np.newaxis, :, :]
    dist2 = np.sum(diff * diff, axis=-1)
    iu, ju = np.triu_indices(n, 1)
    d = dist2[iu, ju]
    return float(np.sqrt(d.min())), float(np.sqrt(d.max()))


def eval_signals(code, amp, omega, phase, offset, t):
    """Value and first two derivatives of stacked scalar signals.

    ``code`` selects the shape: 0 sine, 1 cosine, 2 sine damped by
    ``1/(t+1)``, 3 constant.
    """
    arg = omega * t + phase
    s, c = np.sin(arg), np.cos(arg)
    val = np.where(code == 0, amp * s, 0.0)
    d1 = np.where(code == 0, amp * omega * c, 0.0)
    d2 = np.where(code == 0, -amp * omega * omega * s, 0.0)

    val = np.where(code == 1, amp * c, val)
    d1 = np.where(code == 1, -amp * omega * s, d1)
    d2 = np.where(code == 1, -amp * omega * omega * c, d2)

    r = 1.0 / (t + 1.0)
    val = np.where(code == 2, amp * s * r, val)
    d1 = np.where(code == 2, amp * (omega * c * r - s * r * r), d1)
    d2 = np.where(code == 2, amp * (-omega * omega * s * r - 2.0 * omega * c * r * r
                                   + 2.0 * s * r * r * r), d2)
    return val + offset, d1, d2


def pd_inverse(M, floor):
    """Symmetrised stack ``M`` with eigenvalues clamped at ``floor``, and its inverse."""
    w, Q = np.linalg.eigh(0.5 * (M + np.swapaxes(M, -1, -2)))
    w = np.maximum(w, floor)
    Qt = np.swapaxes(Q, -1, -2)
    return (Q * w[..., np.newaxis, :]) @ Qt, (Q / w[..., np.newaxis, :]) @ Qt
