"""Central finite-difference check of autograd gradients for a module."""

from __future__ import annotations

from typing import Callable

import torch


def max_relative_grad_error(module: torch.nn.Module,
                            loss_fn: Callable[[], torch.Tensor],
                            step: float = 1e-5) -> float:
    """Compare analytic gradients with central finite differences.

    ``loss_fn`` must be a pure function of the module parameters. The module
    should be in 64-bit precision. Returns the max relative error over every
    parameter coordinate, with relative error
    |analytic - fd| / max(|analytic|, |fd|, 1e-5); the floor keeps
    finite-difference roundoff on near-zero coordinates from dominating.
    """
    params = [p for p in module.parameters() if p.requires_grad]
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.detach().clone() if p.grad is not None
                else torch.zeros_like(p) for p in params]

    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, analytic):
            flat = p.view(-1)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                hi = loss_fn().item()
                flat[i] = orig - step
                lo = loss_fn().item()
                flat[i] = orig
                fd = (hi - lo) / (2 * step)
                a = gflat[i].item()
                err = abs(a - fd) / max(abs(a), abs(fd), 1e-5)
                worst = max(worst, err)
    return worst
