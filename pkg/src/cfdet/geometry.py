"""Poincare ball primitives with curvature parameter c > 0.

The ball of curvature -c is the open set {x : c * ||x||^2 < 1}. All
operations here act on the last tensor dimension, are pure, and keep
their outputs strictly inside the ball via an eps_ball safety margin.
Inputs may be any floating torch tensor; float64 is used throughout the
test suite and recommended for round-trip accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import BoundaryError, InvalidInputError, SingularityError

# Below this norm the exp/log maps fall back to their series limit
# (identity), avoiding 0/0 in the direction term.
_TINY_NORM = 1e-12
# Guard for Mobius denominators; unreachable for projected inputs.
_DENOM_FLOOR = 1e-15


@dataclass(frozen=True)
class BallConfig:
    """Curvature and the numerical clamps used by every ball operation.

    c:        curvature magnitude, ball radius is 1/sqrt(c)
    eps_ball: relative margin kept between outputs and the boundary
    eps_tanh: clamp margin for artanh arguments in the log map
    """

    c: float = 1.0
    eps_ball: float = 1e-5
    eps_tanh: float = 1e-7

    def __post_init__(self):
        if not (self.c > 0):
            raise InvalidInputError(f"curvature must be positive, got {self.c}")
        if not (0 < self.eps_ball < 1e-3):
            raise InvalidInputError(f"eps_ball out of (0, 1e-3): {self.eps_ball}")
        if not (0 < self.eps_tanh < 1e-3):
            raise InvalidInputError(f"eps_tanh out of (0, 1e-3): {self.eps_tanh}")

    @property
    def sqrt_c(self) -> float:
        return math.sqrt(self.c)

    @property
    def max_norm(self) -> float:
        """Largest norm an output may carry: (1 - eps_ball)/sqrt(c)."""
        return (1.0 - self.eps_ball) / self.sqrt_c


def _as_tensor(v) -> torch.Tensor:
    t = torch.as_tensor(v)
    if not t.is_floating_point():
        t = t.to(torch.float64)
    return t


def _check_finite(t: torch.Tensor, name: str) -> None:
    if not bool(torch.isfinite(t).all()):
        raise InvalidInputError(f"{name} contains non-finite entries")


def project_to_ball(v, cfg: BallConfig) -> torch.Tensor:
    """Rescale v onto norm (1 - eps_ball)/sqrt(c) whenever it reaches it.

    Interior points pass through unchanged; the zero vector is a fixed
    point. Acts on the last dimension.
    """
    v = _as_tensor(v)
    _check_finite(v, "point")
    norm = v.norm(dim=-1, keepdim=True)
    max_norm = cfg.max_norm
    scale = max_norm / norm.clamp_min(_TINY_NORM)
    return torch.where(norm >= max_norm, v * scale, v)


def exp_origin(u, cfg: BallConfig) -> torch.Tensor:
    """Exponential map at the origin: tanh(sqrt(c)||u||) * u / (sqrt(c)||u||).

    Norms below 1e-12 use the series limit exp(u) ~ u, so the zero
    vector maps to the ball center. The result is projected inside the
    ball with the eps_ball margin.
    """
    u = _as_tensor(u)
    _check_finite(u, "tangent vector")
    sqrt_c = cfg.sqrt_c
    norm = u.norm(dim=-1, keepdim=True)
    scaled = sqrt_c * norm
    # tanh(x)/x -> 1 as x -> 0; the clamp makes the small-norm branch
    # evaluate to u itself instead of 0/0.
    factor = torch.tanh(scaled) / scaled.clamp_min(sqrt_c * _TINY_NORM)
    factor = torch.where(norm < _TINY_NORM, torch.ones_like(factor), factor)
    return project_to_ball(factor * u, cfg)


def log_origin(h, cfg: BallConfig) -> torch.Tensor:
    """Logarithmic map at the origin, inverse of exp_origin.

    Returns artanh(sqrt(c)||h||) * h / (sqrt(c)||h||). The artanh
    argument is clamped to 1 - eps_tanh; points whose scaled norm
    reaches 1 before clamping are rejected.
    """
    h = _as_tensor(h)
    _check_finite(h, "ball point")
    sqrt_c = cfg.sqrt_c
    norm = h.norm(dim=-1, keepdim=True)
    scaled = sqrt_c * norm
    if bool((scaled >= 1.0).any()):
        raise BoundaryError(
            f"point norm {float(norm.max()):.6g} is on or outside the ball of radius {1.0 / sqrt_c:.6g}"
        )
    arg = scaled.clamp_max(1.0 - cfg.eps_tanh)
    factor = torch.atanh(arg) / scaled.clamp_min(sqrt_c * _TINY_NORM)
    factor = torch.where(norm < _TINY_NORM, torch.ones_like(factor), factor)
    return factor * h


def mobius_add(x, y, cfg: BallConfig) -> torch.Tensor:
    """Mobius addition x (+)_c y on the curvature-c ball.

        x (+)_c y = ((1 + 2c<x,y> + c||y||^2) x + (1 - c||x||^2) y)
                    / (1 + 2c<x,y> + c^2 ||x||^2 ||y||^2)

    Both inputs must lie strictly inside the ball; the output is
    re-projected with the eps_ball margin. Left identity 0 (+) y = y
    holds exactly up to rounding.
    """
    x = _as_tensor(x)
    y = _as_tensor(y)
    _check_finite(x, "left point")
    _check_finite(y, "right point")
    c = cfg.c
    x2 = (x * x).sum(dim=-1, keepdim=True)
    y2 = (y * y).sum(dim=-1, keepdim=True)
    if bool((c * x2 >= 1.0).any()) or bool((c * y2 >= 1.0).any()):
        raise BoundaryError("mobius_add operands must lie strictly inside the ball")
    xy = (x * y).sum(dim=-1, keepdim=True)
    num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    if bool((den.abs() < _DENOM_FLOOR).any()):
        raise SingularityError("mobius_add denominator degenerated")
    return project_to_ball(num / den, cfg)
