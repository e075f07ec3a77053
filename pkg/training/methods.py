"""
Uniform training view over every adaptation method.

Each method exposes forward(x), weight(), parameters() and gradients(G), where
G is the gradient of the loss with respect to the adapted weight.
"""
import numpy as np

from adapters import baselines, svft
from adapters.accounting import MethodFamily, MethodSpec
from adapters.patterns import banded, plain, random_pattern, top_k
from numerics.decompositions import SVDFactors, svd
from numerics.errors import ConfigError


class SVFTMethod:
    def __init__(self, adapter: svft.SVFTAdapter):
        self.adapter = adapter

    def forward(self, x):
        return svft.forward(self.adapter, x)

    def weight(self):
        return svft.fuse(self.adapter)

    def parameters(self):
        return [self.adapter.values]

    def gradients(self, upstream):
        return [svft.grad_values(self.adapter, upstream)]


class LoRAMethod:
    def __init__(self, w0: np.ndarray, adapter: baselines.LoRAAdapter):
        self.w0 = w0
        self.adapter = adapter

    def forward(self, x):
        return baselines.lora_forward(self.w0, self.adapter, x)

    def weight(self):
        return self.w0 + baselines.lora_delta(self.adapter)

    def parameters(self):
        return self.adapter.parameters()

    def gradients(self, upstream):
        return baselines.lora_gradients(self.adapter, upstream)


class VeRAMethod:
    def __init__(self, w0: np.ndarray, adapter: baselines.VeRAAdapter):
        self.w0 = w0
        self.adapter = adapter

    def forward(self, x):
        return baselines.vera_forward(self.w0, self.adapter, x)

    def weight(self):
        return self.w0 + baselines.vera_delta(self.adapter)

    def parameters(self):
        return self.adapter.parameters()

    def gradients(self, upstream):
        return baselines.vera_gradients(self.adapter, upstream)


class DoRAMethod:
    def __init__(self, w0: np.ndarray, adapter: baselines.DoRAAdapter):
        self.w0 = w0
        self.adapter = adapter

    def forward(self, x):
        return baselines.dora_forward(self.w0, self.adapter, x)

    def weight(self):
        return baselines.dora_weight(self.w0, self.adapter)

    def parameters(self):
        return self.adapter.parameters()

    def gradients(self, upstream):
        return baselines.dora_gradients(self.w0, self.adapter, upstream)


class FullMethod:
    def __init__(self, w0: np.ndarray):
        self.w = w0.copy()

    def forward(self, x):
        return self.w @ x

    def weight(self):
        return self.w.copy()

    def parameters(self):
        return [self.w]

    def gradients(self, upstream):
        return [upstream]


def num_trainable(method) -> int:
    return int(sum(p.size for p in method.parameters()))


def build_method(
    spec: MethodSpec,
    w0: np.ndarray,
    init_seed: int = 0,
    factors: SVDFactors | None = None,
    truncate_rank: int | None = None,
    truncate_base: bool = False,
):
    d1, d2 = w0.shape
    family = spec.family
    if truncate_rank is not None and family not in (MethodFamily.SVFT_P, MethodFamily.SVFT_B):
        raise ConfigError(f"Rank truncation is only defined for svft-p and svft-b, not {family.value}")

    if family.is_svft:
        factors = factors if factors is not None else svd(w0)
        if family == MethodFamily.SVFT_P:
            pattern = plain(d1, d2)
        elif family == MethodFamily.SVFT_B:
            pattern = banded(d1, d2, spec.knob)
        elif family == MethodFamily.SVFT_R:
            pattern = random_pattern(d1, d2, spec.knob, spec.seed)
        else:
            pattern = top_k(factors, spec.knob)
        adapter = svft.init_adapter(w0, pattern, factors)
        if truncate_rank is not None:
            adapter = svft.truncate(adapter, truncate_rank, truncate_base)
        return SVFTMethod(adapter)
    if family == MethodFamily.LORA:
        return LoRAMethod(w0, baselines.init_lora(d1, d2, spec.knob, init_seed))
    if family == MethodFamily.VERA:
        return VeRAMethod(w0, baselines.init_vera(d1, d2, spec.knob, spec.seed))
    if family == MethodFamily.DORA:
        return DoRAMethod(w0, baselines.init_dora(w0, spec.knob, init_seed))
    return FullMethod(w0)
