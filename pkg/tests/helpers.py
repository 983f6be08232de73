"""Shared test utilities: random manifold samples and a finite-difference
gradient checker."""

from __future__ import annotations

import torch
from torch import Tensor

from treegraph.geometry import exp_map0, minkowski_inner, tangent_at_origin


def random_points(gen: torch.Generator, count: int, n: int, k: float, scale: float = 1.0) -> Tensor:
    """Random manifold points from Gaussian tangent shots at the origin."""
    spatial = torch.randn(count, n, generator=gen, dtype=torch.float64) * scale
    return exp_map0(tangent_at_origin(spatial), k)


def random_tangents(gen: torch.Generator, x: Tensor, k: float, max_norm: float = 5.0) -> Tensor:
    """Random tangent vectors at each row of x with Minkowski norm <= max_norm.

    An ambient Gaussian is projected onto the tangent space at x, then
    rescaled where its norm exceeds the cap.
    """
    w = torch.randn(*x.shape, generator=gen, dtype=torch.float64)
    coef = minkowski_inner(x, w) / k
    v = w + coef.unsqueeze(-1) * x
    vv = minkowski_inner(v, v).clamp_min(0.0)
    norm = torch.sqrt(vv + 1e-300)
    factor = torch.where(norm > max_norm, max_norm / norm, torch.ones_like(norm))
    return v * factor.unsqueeze(-1)


def finite_difference_grads(loss_fn, tensors: dict[str, Tensor], h: float = 1e-5) -> dict[str, Tensor]:
    """Central differences of loss_fn with respect to each tensor, elementwise.

    loss_fn must be a pure function of the tensors' current values.
    """
    out = {}
    with torch.no_grad():
        for name, t in tensors.items():
            grad = torch.zeros_like(t)
            flat = t.view(-1)
            gflat = grad.view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + h
                up = float(loss_fn())
                flat[i] = orig - h
                down = float(loss_fn())
                flat[i] = orig
                gflat[i] = (up - down) / (2.0 * h)
            out[name] = grad
    return out


def check_grads(
    loss_fn,
    tensors: dict[str, Tensor],
    rel_tol: float = 1e-3,
    h: float = 1e-5,
    abs_tol: float = 1e-8,
) -> float:
    """Compare autograd against central differences, per tensor.

    Passes when ||g_ad - g_fd|| <= rel_tol * ||g_fd|| + abs_tol. The
    absolute floor covers near-zero gradients, where central differences
    bottom out at roundoff and a pure ratio would measure only that
    noise. Returns the worst relative error seen.
    """
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    fd = finite_difference_grads(loss_fn, tensors, h=h)
    worst = 0.0
    for name, t in tensors.items():
        ad = t.grad if t.grad is not None else torch.zeros_like(t)
        gap = float((ad - fd[name]).norm())
        ref = float(fd[name].norm())
        err = gap / (ref + 1e-8)
        assert gap <= rel_tol * ref + abs_tol, (
            f"{name}: autograd vs finite differences gap {gap:.3e} "
            f"against reference norm {ref:.3e} (rel {rel_tol:.0e}, abs {abs_tol:.0e})"
        )
        worst = max(worst, err)
    return worst
