"""Shared test oracles: finite differences and gradient comparison."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from mosnas.autodiff import Tensor


def finite_difference_grad(f: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar-valued closure w.r.t. t.data.

    Independent of the reverse-mode engine: only re-evaluates the forward
    closure with perturbed entries.
    """
    grad = np.zeros_like(t.data)
    flat = t.data.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f().item()
        flat[i] = orig - h
        fm = f().item()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_grads(f: Callable[[], Tensor], params: Sequence[Tensor],
                tol: float = 1e-4, h: float = 1e-5) -> float:
    """Compare analytic gradients of f() against central differences.

    Returns the worst relative error across all parameters.
    """
    for p in params:
        p.grad = None
    loss = f()
    loss.backward()
    worst = 0.0
    for p in params:
        assert p.grad is not None, f"no gradient reached parameter of shape {p.shape}"
        fd = finite_difference_grad(f, p, h=h)
        err = max_rel_err(p.grad, fd)
        worst = max(worst, err)
        assert err <= tol, f"gradient mismatch {err:.3e} > {tol} on shape {p.shape}"
    return worst
