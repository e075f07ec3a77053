"""
Method vocabulary and trainable-parameter accountants.

param_count reproduces the closed forms for L adapted square layers of width D;
trainable_params counts a single rectangular d1 x d2 matrix and is what the
trainer reports.
"""
from enum import Enum

from pydantic import BaseModel, ConfigDict, model_validator

from adapters.patterns import banded, restrict
from numerics.errors import ConfigError, UnknownMethodError


class MethodFamily(str, Enum):
    SVFT_P = "svft-p"
    SVFT_B = "svft-b"
    SVFT_R = "svft-r"
    SVFT_T = "svft-t"
    LORA = "lora"
    VERA = "vera"
    DORA = "dora"
    FULL = "full"

    @property
    def is_svft(self) -> bool:
        return self.value.startswith("svft")


KNOB_NAMES = {
    MethodFamily.SVFT_B: "d",
    MethodFamily.SVFT_R: "total",
    MethodFamily.SVFT_T: "k",
    MethodFamily.LORA: "r",
    MethodFamily.VERA: "r",
    MethodFamily.DORA: "r",
}


class MethodSpec(BaseModel):
    """One configured method, e.g. lora:2, svft-b:1, svft-r:40:7, svft-p"""
    model_config = ConfigDict(frozen=True)

    family: MethodFamily
    knob: int | None = None
    seed: int = 0

    @model_validator(mode="after")
    def check_knob(self):
        if self.family in KNOB_NAMES:
            if self.knob is None:
                raise ValueError(f"{self.family.value} needs a {KNOB_NAMES[self.family]} value")
            minimum = 0 if self.family == MethodFamily.SVFT_B else 1
            if self.knob < minimum:
                raise ValueError(f"{self.family.value} {KNOB_NAMES[self.family]} must be >= {minimum}, got {self.knob}")
        elif self.knob is not None:
            raise ValueError(f"{self.family.value} takes no budget knob")
        return self

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        parts = [p.strip() for p in text.strip().lower().split(":")]
        try:
            family = MethodFamily(parts[0])
        except ValueError as e:
            raise UnknownMethodError(f"Unknown method {parts[0]!r}") from e
        try:
            numbers = [int(p) for p in parts[1:]]
        except ValueError as e:
            raise ConfigError(f"Method spec {text!r} has a non-integer field") from e
        if len(numbers) > 2:
            raise ConfigError(f"Method spec {text!r} has too many fields")
        fields = {"family": family}
        if numbers:
            fields["knob"] = numbers[0]
        if len(numbers) == 2:
            fields["seed"] = numbers[1]
        try:
            return cls(**fields)
        except ValueError as e:
            raise ConfigError(f"Invalid method spec {text!r}: {e}") from e

    @property
    def label(self) -> str:
        text = self.family.value
        if self.knob is not None:
            text += f":{self.knob}"
        if self.family in (MethodFamily.SVFT_R, MethodFamily.VERA) and self.seed:
            text += f":{self.seed}"
        return text

    @property
    def variant(self) -> str:
        if self.knob is None:
            return ""
        return f"{KNOB_NAMES[self.family]}={self.knob}"


def param_count(method, l_tuned: int, d_model: int, r_or_k: int = 0) -> int:
    """Closed-form trainable parameter counts for L square layers of width D"""
    try:
        family = MethodFamily(method)
    except ValueError as e:
        raise UnknownMethodError(f"Unknown method {method!r}") from e
    if l_tuned < 1 or d_model < 1 or r_or_k < 0:
        raise ConfigError(f"Counts must be positive (got L={l_tuned}, D={d_model}, r/k={r_or_k})")
    if family == MethodFamily.LORA:
        return 2 * l_tuned * d_model * r_or_k
    if family == MethodFamily.DORA:
        return l_tuned * d_model * (2 * r_or_k + 1)
    if family == MethodFamily.VERA:
        return l_tuned * (d_model + r_or_k)
    if family == MethodFamily.SVFT_P:
        return l_tuned * d_model
    if family == MethodFamily.SVFT_B:
        if r_or_k >= d_model:
            raise ConfigError(f"Banded half-width {r_or_k} must be below D={d_model}")
        k = r_or_k
        return l_tuned * (d_model * k + (d_model - k) * (k + 1))
    raise UnknownMethodError(f"No closed-form count for {family.value}")


def trainable_params(spec: MethodSpec, d1: int, d2: int, truncate_rank: int | None = None) -> int:
    """Trainable scalar count of one adapted d1 x d2 matrix"""
    family = spec.family
    if truncate_rank is not None and family not in (MethodFamily.SVFT_P, MethodFamily.SVFT_B):
        raise ConfigError(f"Rank truncation is only defined for svft-p and svft-b, not {family.value}")
    if family == MethodFamily.SVFT_P:
        return min(d1, d2) if truncate_rank is None else truncate_rank
    if family == MethodFamily.SVFT_B:
        pattern = banded(d1, d2, spec.knob)
        return len(pattern) if truncate_rank is None else len(restrict(pattern, truncate_rank))
    if family in (MethodFamily.SVFT_R, MethodFamily.SVFT_T):
        return spec.knob
    if family == MethodFamily.LORA:
        return spec.knob * (d1 + d2)
    if family == MethodFamily.DORA:
        return spec.knob * (d1 + d2) + d2
    if family == MethodFamily.VERA:
        return d1 + spec.knob
    return d1 * d2
