"""AdamW with decoupled weight decay, plus the two learning-rate schedules."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class NonFiniteGradientError(RuntimeError):
    def __init__(self, param_name: str):
        super().__init__(f"non-finite gradient for parameter {param_name!r}; step aborted")
        self.param_name = param_name


class AdamW:
    def __init__(self, params: list[tuple[str, Tensor]], lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.99), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for _, p in self.params]
        self._v = [np.zeros_like(p.data) for _, p in self.params]

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self):
        # validate every gradient before touching any parameter
        for name, p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradientError(name)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, (name, p) in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            m = self._m[i]
            v = self._v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= self.lr * update


def schedule_lr(kind: str, it: int, peak: float, warmup_iter: int,
                total_iter: int | None = None, milestones: tuple[int, ...] = (),
                gamma: float = 0.05) -> float:
    """Learning rate at iteration `it` (0-based).

    warmup-then-milestones: linear ramp 0 -> peak over warmup_iter, then peak
    scaled by gamma at each passed milestone. warmup-then-cosine: same ramp,
    then cosine annealing to 0 at total_iter.
    """
    if it < 0:
        raise ValueError("iteration must be >= 0")
    if warmup_iter > 0 and it < warmup_iter:
        return peak * it / warmup_iter
    if kind == "warmup-then-milestones":
        passed = sum(1 for m in milestones if it >= m)
        return peak * gamma ** passed
    if kind == "warmup-then-cosine":
        if total_iter is None:
            raise ValueError("cosine schedule needs total_iter")
        span = max(total_iter - warmup_iter, 1)
        progress = min(max((it - warmup_iter) / span, 0.0), 1.0)
        return peak * 0.5 * (1.0 + np.cos(np.pi * progress))
    raise ValueError(f"unknown schedule kind {kind!r}")
