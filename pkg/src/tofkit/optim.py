"""AdamW with decoupled weight decay and bias-corrected moments."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor

__all__ = ["adamw_step", "AdamW"]


def adamw_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
               t: int, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 0.0):
    """One update on raw arrays; returns (param, m, v). t is 1-based."""
    b1, b2 = betas
    param = param * (1.0 - lr * weight_decay)  # decoupled decay
    m = b1 * m + (1.0 - b1) * grad
    v = b2 * v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


class AdamW:
    def __init__(self, named_params: list[tuple[str, Tensor]], lr: float = 1.5e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.01):
        self.named_params = list(named_params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.named_params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.named_params}

    def zero_grad(self) -> None:
        for _, p in self.named_params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        for n, p in self.named_params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.data, self.m[n], self.v[n] = adamw_step(
                p.data, g, self.m[n], self.v[n], self.t, self.lr,
                self.betas, self.eps, self.weight_decay)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment buffers plus step counter, for checkpoint resume."""
        out = {}
        for n, _ in self.named_params:
            out[f"m/{n}"] = self.m[n]
            out[f"v/{n}"] = self.v[n]
        out["t"] = np.array([float(self.t)])
        return out

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        for n, p in self.named_params:
            self.m[n] = np.asarray(state[f"m/{n}"], dtype=p.data.dtype).reshape(p.shape)
            self.v[n] = np.asarray(state[f"v/{n}"], dtype=p.data.dtype).reshape(p.shape)
        self.t = int(round(float(np.asarray(state["t"]).reshape(-1)[0])))
