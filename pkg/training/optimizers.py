"""
In-place optimizers over a fixed list of numpy parameter arrays.
"""
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


class OptimizerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: OptimizerKind = OptimizerKind.SGD
    lr: float = Field(0.1, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    warmup_steps: int = Field(0, ge=0)

    def lr_at(self, step: int) -> float:
        """Constant rate after an optional linear warmup"""
        if self.warmup_steps and step < self.warmup_steps:
            return self.lr * (step + 1) / self.warmup_steps
        return self.lr


class SGD:
    def __init__(self, params: list[np.ndarray], spec: OptimizerSpec):
        self.params = params
        self.spec = spec
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        lr = self.spec.lr_at(self.t)
        for p, g in zip(self.params, grads):
            p -= lr * g
        self.t += 1


class Adam:
    def __init__(self, params: list[np.ndarray], spec: OptimizerSpec):
        self.params = params
        self.spec = spec
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]):
        lr = self.spec.lr_at(self.t)
        b1, b2 = self.spec.beta1, self.spec.beta2
        self.t += 1
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.spec.eps)


def make_optimizer(spec: OptimizerSpec, params: list[np.ndarray]):
    if spec.kind == OptimizerKind.ADAM:
        return Adam(params, spec)
    return SGD(params, spec)
