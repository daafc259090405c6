"""Signum-type switching functions and their boundary-layer smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LayerSpec:
    """Boundary layer of width ``epsilon * exp(-c t)``; ``c = 0`` keeps it fixed."""

    epsilon: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0 or self.c < 0:
            raise ValueError(f"layer needs epsilon >= 0 and c >= 0, got {self}")

    def width(self, t: float) -> float:
        return self.epsilon * np.exp(-self.c * t) if self.c else self.epsilon

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "c": self.c}


def sig_alpha(z, alpha: float) -> np.ndarray:
    """Componentwise ``|z|**alpha * sgn(z)`` with ``sgn(0) = 0``.

    ``alpha = 0`` gives the plain signum.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    z = np.asarray(z, dtype=float)
    if alpha == 0:
        return np.sign(z)
    if alpha == 1:
        return z.copy()
    return np.sign(z) * np.abs(z) ** alpha


def boundary_layer(z, spec: LayerSpec, t: float = 0.0) -> np.ndarray:
    """``z / (||z||_2 + epsilon exp(-c t))``, and 0 at ``z = 0``.

    Operates on the last axis, so a stack of vectors is mapped row by row.
    """
    z = np.asarray(z, dtype=float)
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    denom = norm + spec.width(t)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, z / np.where(denom > 0, denom, 1.0), 0.0)
    return out
