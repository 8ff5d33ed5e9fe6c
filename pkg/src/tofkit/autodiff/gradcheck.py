"""Central-difference gradient verification.

The numeric side is computed independently of the tape (pure forward
evaluations), so it can act as an oracle for every backward rule.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .engine import Tensor, backward

__all__ = ["finite_diff_check", "finite_diff_check_sampled"]


def _rel_err(a: np.ndarray, n: np.ndarray) -> np.ndarray:
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> float:
    """Max over coordinates of |analytic - numeric| / max(1e-8, |a| + |n|).

    f must map one tensor to a scalar Tensor; other inputs of f should be
    closed over. Every coordinate of x is perturbed, so keep x small.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x.requires_grad = True
    x.zero_grad()
    out = f(x)
    backward(out)
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
    x.requires_grad = False

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x).item()
        flat[i] = orig - eps
        lo = f(x).item()
        flat[i] = orig
        nflat[i] = (hi - lo) / (2 * eps)
    return float(_rel_err(analytic, numeric).max())


def finite_diff_check_sampled(f: Callable[[], Tensor], params: list[Tensor],
                              n_samples: int, rng: np.random.Generator,
                              eps: float = 1e-6) -> float:
    """Spot-check randomly sampled coordinates across several tensors.

    Used for whole-model checks where perturbing every parameter would take
    hours; the sampled coordinates still compare analytic vs central
    differences exactly like finite_diff_check.
    """
    for p in params:
        p.requires_grad = True
        p.zero_grad()
    out = f()
    backward(out)
    grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    for p in params:
        p.requires_grad = False

    worst = 0.0
    sizes = np.array([p.size for p in params])
    probs = sizes / sizes.sum()
    for _ in range(n_samples):
        t = int(rng.choice(len(params), p=probs))
        i = int(rng.integers(params[t].size))
        flat = params[t].data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        hi = f().item()
        flat[i] = orig - eps
        lo = f().item()
        flat[i] = orig
        numeric = (hi - lo) / (2 * eps)
        analytic = grads[t].reshape(-1)[i]
        worst = max(worst, float(_rel_err(np.asarray(analytic), np.asarray(numeric))))
    for p in params:
        p.requires_grad = True
    return worst
