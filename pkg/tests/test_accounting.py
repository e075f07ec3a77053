import numpy as np
import pytest

from adapters.accounting import MethodFamily, MethodSpec, param_count, trainable_params
from numerics.errors import ConfigError, UnknownMethodError
from training.methods import build_method, num_trainable


@pytest.mark.parametrize("args, expected", [
    (("svft-p", 1, 2048), 2048),
    (("lora", 1, 2048, 1), 4096),
    (("svft-b", 1, 6, 2), 24),
    (("dora", 2, 10, 3), 140),
    (("vera", 4, 16, 8), 96),
    (("lora", 1, 8, 0), 0),
])
def test_closed_forms(args, expected):
    assert param_count(*args) == expected


@pytest.mark.parametrize("d", range(4, 65))
def test_banded_identity(d):
    for k in range(0, min(9, d)):
        assert d * (2 * k + 1) - k * (k + 1) == d * k + (d - k) * (k + 1)
        assert param_count("svft-b", 1, d, k) == d * (2 * k + 1) - k * (k + 1)


@pytest.mark.parametrize("d", [4, 5, 8, 13, 16, 32, 64])
def test_counts_match_enumerated_scalars(d):
    w0 = np.random.default_rng(d).standard_normal((d, d))
    for knob in range(0, 9):
        specs = []
        if knob < d:
            specs.append(MethodSpec(family=MethodFamily.SVFT_B, knob=knob))
        if knob >= 1:
            specs += [MethodSpec(family=f, knob=knob) for f in (MethodFamily.LORA, MethodFamily.VERA, MethodFamily.DORA)]
        if knob == 0:
            specs.append(MethodSpec(family=MethodFamily.SVFT_P))
        for spec in specs:
            enumerated = num_trainable(build_method(spec, w0))
            assert trainable_params(spec, d, d) == enumerated
            for layers in (1, 2, 4):
                assert param_count(spec.family, layers, d, knob) == layers * enumerated


def test_rectangular_counts():
    assert trainable_params(MethodSpec.parse("lora:2"), 6, 4) == 20
    assert trainable_params(MethodSpec.parse("dora:1"), 6, 4) == 14
    assert trainable_params(MethodSpec.parse("vera:3"), 6, 4) == 9
    assert trainable_params(MethodSpec.parse("svft-p"), 6, 4) == 4
    assert trainable_params(MethodSpec.parse("svft-r:10:3"), 6, 4) == 10
    assert trainable_params(MethodSpec.parse("full"), 6, 4) == 24
    assert trainable_params(MethodSpec.parse("svft-b:1"), 6, 6, truncate_rank=3) == 7


def test_truncation_only_for_plain_and_banded():
    with pytest.raises(ConfigError):
        trainable_params(MethodSpec.parse("lora:1"), 4, 4, truncate_rank=2)


def test_param_count_errors():
    with pytest.raises(UnknownMethodError):
        param_count("adapterx", 1, 8, 1)
    with pytest.raises(UnknownMethodError):
        param_count("full", 1, 8)
    with pytest.raises(ConfigError):
        param_count("svft-b", 1, 4, 4)
    with pytest.raises(ConfigError):
        param_count("lora", 0, 4, 1)


@pytest.mark.parametrize("text, family, knob, seed", [
    ("lora:2", MethodFamily.LORA, 2, 0),
    ("SVFT-B:0", MethodFamily.SVFT_B, 0, 0),
    ("svft-r:40:7", MethodFamily.SVFT_R, 40, 7),
    ("svft-p", MethodFamily.SVFT_P, None, 0),
    ("full", MethodFamily.FULL, None, 0),
])
def test_method_spec_parse(text, family, knob, seed):
    spec = MethodSpec.parse(text)
    assert (spec.family, spec.knob, spec.seed) == (family, knob, seed)


@pytest.mark.parametrize("text, error", [
    ("adapterx:2", UnknownMethodError),
    ("lora", ConfigError),
    ("lora:0", ConfigError),
    ("lora:x", ConfigError),
    ("svft-p:3", ConfigError),
    ("svft-r:4:1:2", ConfigError),
])
def test_method_spec_parse_errors(text, error):
    with pytest.raises(error):
        MethodSpec.parse(text)


def test_labels():
    assert MethodSpec.parse("svft-r:40:7").label == "svft-r:40:7"
    assert MethodSpec.parse("lora:2").variant == "r=2"
    assert MethodSpec.parse("full").variant == ""
