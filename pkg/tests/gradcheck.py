"""Central-difference gradient oracle, independent of autograd.

Every gradient assertion in the suite goes through these helpers so the
reference path never touches torch.autograd.
"""

import numpy as np
import torch


def central_difference(f, x: torch.Tensor, step: float = 1e-4) -> torch.Tensor:
    """Gradient of scalar f at x via central differences, one entry at a time."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + step
        f_plus = float(f(x))
        flat[i] = orig - step
        f_minus = float(f(x))
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def autograd_gradient(f, x: torch.Tensor) -> torch.Tensor:
    x = x.detach().clone().requires_grad_(True)
    out = f(x)
    out.backward()
    return x.grad.detach().clone()


def max_rel_error(a: torch.Tensor, b: torch.Tensor, floor: float = 1e-6) -> float:
    """Max elementwise |a - b| / max(|a|, |b|, floor)."""
    a = np.asarray(a.detach(), dtype=np.float64)
    b = np.asarray(b.detach(), dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def check_gradient(f, x: torch.Tensor, step: float = 1e-4, tol: float = 1e-3) -> float:
    """Assert autograd matches central differences; returns the max rel err."""
    err = max_rel_error(autograd_gradient(f, x), central_difference(f, x, step))
    assert err < tol, f"gradient mismatch: max rel err {err:.3e} >= {tol}"
    return err
