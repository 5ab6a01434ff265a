"""Adam with coupled L2 weight decay and per-tensor state that can be cloned."""
from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class AdamState:
    step: int
    m: torch.Tensor
    v: torch.Tensor


class Adam:
    def __init__(self, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state: dict[int, AdamState] = {}

    def _state(self, p: torch.Tensor) -> AdamState:
        st = self.state.get(id(p))
        if st is None:
            st = self.state[id(p)] = AdamState(0, torch.zeros_like(p), torch.zeros_like(p))
        return st

    @torch.no_grad()
    def step(self, params: list[torch.Tensor]) -> None:
        """Update every tensor in ``params`` that holds a gradient."""
        for p in params:
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p
            st = self._state(p)
            st.step += 1
            st.m.mul_(self.beta1).add_(g, alpha=1 - self.beta1)
            st.v.mul_(self.beta2).addcmul_(g, g, value=1 - self.beta2)
            m_hat = st.m / (1 - self.beta1 ** st.step)
            v_hat = st.v / (1 - self.beta2 ** st.step)
            p.sub_(self.lr * m_hat / (v_hat.sqrt() + self.eps))

    def clone_state(self, src: torch.Tensor, dst: torch.Tensor) -> None:
        st = self.state.get(id(src))
        if st is not None:
            self.state[id(dst)] = AdamState(st.step, st.m.clone(), st.v.clone())

    def get(self, p: torch.Tensor) -> AdamState | None:
        return self.state.get(id(p))

    def set(self, p: torch.Tensor, state: AdamState) -> None:
        self.state[id(p)] = state
