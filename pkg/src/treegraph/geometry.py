"""Hyperboloid model of hyperbolic space.

Points live in R^{n+1} with the Minkowski bilinear form
<x, y> = -x0*y0 + sum_{i>=1} xi*yi. The manifold of curvature -1/k is
the upper sheet {x : <x, x> = -k, x0 > 0}; tangent vectors at x are
ambient vectors with <x, v> = 0. The origin is [sqrt(k), 0, ..., 0],
and tangent vectors there have a zero first coordinate, so Euclidean
n-vectors lift into its tangent space by prepending a 0.

All functions work in float64, broadcast over leading batch dimensions
and treat the trailing axis as the coordinate axis.
"""

from __future__ import annotations

import math
from typing import Callable

import torch
from torch import Tensor

# Tangent norms are clipped to this before cosh/sinh. cosh(32) ~ 4e13,
# which still leaves float64 headroom for downstream products.
MAX_TANGENT_NORM = 32.0

# Squared-norm threshold below which the sinh(r)/r style quotients
# switch to their series expansions.
_TINY_SQ = 1e-16

# Threshold on t = alpha - 1 below which arcosh-based quotients switch
# to series; at 1e-6 both branches agree to ~1e-13 relative.
_TINY_T = 1e-6


def minkowski_inner(a: Tensor, b: Tensor) -> Tensor:
    """Minkowski inner product -a0*b0 + sum_{i>=1} ai*bi over the last axis."""
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(
            f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}"
        )
    return (a[..., 1:] * b[..., 1:]).sum(-1) - a[..., 0] * b[..., 0]


def origin(n: int, k: float, *, dtype: torch.dtype = torch.float64) -> Tensor:
    """The point [sqrt(k), 0, ..., 0] in ambient dimension n+1."""
    o = torch.zeros(n + 1, dtype=dtype)
    o[0] = math.sqrt(k)
    return o


def tangent_at_origin(b: Tensor) -> Tensor:
    """Lift a Euclidean vector into the origin's tangent space: [0 || b]."""
    return torch.cat([torch.zeros_like(b[..., :1]), b], dim=-1)


def project_to_manifold(raw: Tensor, k: float) -> Tensor:
    """Rebuild the time coordinate from the spatial ones.

    Keeps raw[1:] and recomputes x0 = sqrt(k + sum raw[i]^2), which puts
    any ambient vector back on the manifold exactly. Used to undo float
    drift, not as a projection in the metric sense.
    """
    spatial = raw[..., 1:]
    x0 = torch.sqrt(k + spatial.pow(2).sum(-1, keepdim=True))
    return torch.cat([x0, spatial], dim=-1)


def exp_map(x: Tensor, v: Tensor, k: float) -> Tensor:
    """Follow the geodesic from x with initial velocity v for unit time.

    v must be tangent at x. The zero-vector case returns x (the limit),
    via a series branch that keeps gradients finite.
    """
    sqrt_k = math.sqrt(k)
    vv = minkowski_inner(v, v).clamp_min(0.0)
    norm = torch.sqrt(vv.clamp_min(_TINY_SQ))
    r = (norm / sqrt_k).clamp_max(MAX_TANGENT_NORM)
    small = vv < _TINY_SQ
    # sinh(r)/r -> 1 + r^2/6 as r -> 0; written against vv so the
    # gradient at v = 0 is exact.
    coef = torch.where(small, 1.0 + vv / (6.0 * k), sqrt_k * torch.sinh(r) / norm)
    return torch.cosh(r).unsqueeze(-1) * x + coef.unsqueeze(-1) * v


def _acosh_over_sqrt(t: Tensor) -> Tensor:
    # arcosh(1 + t) / sqrt((1 + t)^2 - 1), continued to 1 at t = 0.
    t_safe = t.clamp_min(_TINY_T)
    main = torch.acosh(1.0 + t_safe) / torch.sqrt(t_safe * (t_safe + 2.0))
    series = 1.0 - t / 3.0 + (2.0 / 15.0) * t * t
    return torch.where(t < _TINY_T, series, main)


def log_map(x: Tensor, y: Tensor, k: float) -> Tensor:
    """Tangent vector at x pointing to y with length d(x, y).

    Inverse of exp_map; log_map(x, x) is the zero vector.
    """
    alpha = (-minkowski_inner(x, y) / k).clamp_min(1.0)
    u = y - alpha.unsqueeze(-1) * x
    return _acosh_over_sqrt(alpha - 1.0).unsqueeze(-1) * u


def distance(x: Tensor, y: Tensor, k: float) -> Tensor:
    """Geodesic distance sqrt(k) * arcosh(-<x, y> / k)."""
    alpha = (-minkowski_inner(x, y) / k).clamp_min(1.0)
    return math.sqrt(k) * torch.acosh(alpha)


def distance_sq(x: Tensor, y: Tensor, k: float) -> Tensor:
    """Squared geodesic distance with a gradient that is smooth at x = y.

    d^2 = k * arcosh(1 + t)^2 with t = -<x, y>/k - 1; near t = 0 the
    arcosh branch has an unbounded derivative, so a series takes over.
    """
    alpha = (-minkowski_inner(x, y) / k).clamp_min(1.0)
    t = alpha - 1.0
    t_safe = t.clamp_min(_TINY_T)
    main = torch.acosh(1.0 + t_safe).pow(2)
    series = 2.0 * t - t * t / 3.0
    return k * torch.where(t < _TINY_T, series, main)


def parallel_transport(x: Tensor, y: Tensor, v: Tensor, k: float) -> Tensor:
    """Transport tangent vector v from x to y along the geodesic.

    Uses the closed form v + <y, v> / (k - <x, y>) * (x + y), which is
    algebraically equal to the textbook expression through log maps and
    stays smooth at x = y (where it is the identity).
    """
    yv = minkowski_inner(y, v)
    denom = k - minkowski_inner(x, y)  # = k * (1 + alpha) >= 2k
    return v + (yv / denom).unsqueeze(-1) * (x + y)


def exp_map0(u: Tensor, k: float) -> Tensor:
    """exp map at the origin.

    Only the spatial part of u contributes; the time coordinate is
    projected away, so affine images W @ log0(x) are legal inputs even
    when W does not preserve the tangent slice.
    """
    sqrt_k = math.sqrt(k)
    b = u[..., 1:]
    bb = b.pow(2).sum(-1)
    norm = torch.sqrt(bb.clamp_min(_TINY_SQ))
    r = (norm / sqrt_k).clamp_max(MAX_TANGENT_NORM)
    small = bb < _TINY_SQ
    coef = torch.where(small, 1.0 + bb / (6.0 * k), sqrt_k * torch.sinh(r) / norm)
    x0 = sqrt_k * torch.cosh(r)
    return torch.cat([x0.unsqueeze(-1), coef.unsqueeze(-1) * b], dim=-1)


def log_map0(x: Tensor, k: float) -> Tensor:
    """log map at the origin; first output coordinate is exactly 0."""
    sqrt_k = math.sqrt(k)
    alpha = (x[..., 0] / sqrt_k).clamp_min(1.0)
    spatial = _acosh_over_sqrt(alpha - 1.0).unsqueeze(-1) * x[..., 1:]
    return torch.cat([torch.zeros_like(x[..., :1]), spatial], dim=-1)


def hyp_activation(x: Tensor, f: Callable[[Tensor], Tensor], k: float) -> Tensor:
    """Apply an elementwise map in the origin's tangent space: exp0(f(log0(x)))."""
    return exp_map0(f(log_map0(x, k)), k)


class Hyperboloid:
    """Curvature -1/k geometry with the module's functions bound to k.

    The model code talks to this interface only, so the flat variant
    below can be swapped in without touching call sites.
    """

    hyperbolic = True

    def __init__(self, k: float = 1.0):
        if not k > 0:
            raise ValueError(f"curvature parameter must be positive, got {k}")
        self.k = float(k)

    def __repr__(self) -> str:
        return f"Hyperboloid(k={self.k})"

    def origin(self, n: int) -> Tensor:
        return origin(n, self.k)

    def expmap0(self, u: Tensor) -> Tensor:
        return exp_map0(u, self.k)

    def logmap0(self, x: Tensor) -> Tensor:
        return log_map0(x, self.k)

    def expmap(self, x: Tensor, v: Tensor) -> Tensor:
        return exp_map(x, v, self.k)

    def logmap(self, x: Tensor, y: Tensor) -> Tensor:
        return log_map(x, y, self.k)

    def transport(self, x: Tensor, y: Tensor, v: Tensor) -> Tensor:
        return parallel_transport(x, y, v, self.k)

    def dist(self, x: Tensor, y: Tensor) -> Tensor:
        return distance(x, y, self.k)

    def dist_sq(self, x: Tensor, y: Tensor) -> Tensor:
        return distance_sq(x, y, self.k)

    def pairwise_dist_sq(self, x: Tensor, y: Tensor) -> Tensor:
        """All-pairs squared distances, x: (M, n+1), y: (T, n+1) -> (M, T)."""
        inner = x[:, 1:] @ y[:, 1:].T - torch.outer(x[:, 0], y[:, 0])
        alpha = (-inner / self.k).clamp_min(1.0)
        t = alpha - 1.0
        t_safe = t.clamp_min(_TINY_T)
        main = torch.acosh(1.0 + t_safe).pow(2)
        series = 2.0 * t - t * t / 3.0
        return self.k * torch.where(t < _TINY_T, series, main)

    def pairwise_dist(self, x: Tensor, y: Tensor) -> Tensor:
        inner = x[:, 1:] @ y[:, 1:].T - torch.outer(x[:, 0], y[:, 0])
        alpha = (-inner / self.k).clamp_min(1.0)
        return math.sqrt(self.k) * torch.acosh(alpha)

    def project(self, raw: Tensor) -> Tensor:
        return project_to_manifold(raw, self.k)


class EuclideanSpace:
    """Flat stand-in with the same call surface as Hyperboloid.

    Points keep the (n+1)-dim ambient layout with a structurally zero
    first coordinate, so swapping geometries does not change any shape.
    Maps degenerate to identities and vector arithmetic.
    """

    hyperbolic = False
    k = 1.0  # unused, kept so config echo stays uniform

    def __repr__(self) -> str:
        return "EuclideanSpace()"

    @staticmethod
    def _zero_time(u: Tensor) -> Tensor:
        return torch.cat([torch.zeros_like(u[..., :1]), u[..., 1:]], dim=-1)

    def origin(self, n: int) -> Tensor:
        return torch.zeros(n + 1, dtype=torch.float64)

    def expmap0(self, u: Tensor) -> Tensor:
        return self._zero_time(u)

    def logmap0(self, x: Tensor) -> Tensor:
        return self._zero_time(x)

    def expmap(self, x: Tensor, v: Tensor) -> Tensor:
        return x + self._zero_time(v)

    def logmap(self, x: Tensor, y: Tensor) -> Tensor:
        return y - x

    def transport(self, x: Tensor, y: Tensor, v: Tensor) -> Tensor:
        return v

    def dist(self, x: Tensor, y: Tensor) -> Tensor:
        return torch.sqrt(self.dist_sq(x, y).clamp_min(0.0))

    def dist_sq(self, x: Tensor, y: Tensor) -> Tensor:
        return (x - y).pow(2).sum(-1)

    def pairwise_dist_sq(self, x: Tensor, y: Tensor) -> Tensor:
        xx = x.pow(2).sum(-1, keepdim=True)
        yy = y.pow(2).sum(-1)
        return (xx + yy - 2.0 * (x @ y.T)).clamp_min(0.0)

    def pairwise_dist(self, x: Tensor, y: Tensor) -> Tensor:
        return torch.sqrt(self.pairwise_dist_sq(x, y))

    def project(self, raw: Tensor) -> Tensor:
        return self._zero_time(raw)
