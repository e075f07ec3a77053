import numpy as np
import pytest

from adapters.accounting import MethodSpec
from numerics.errors import DivergenceError
from training.optimizers import OptimizerSpec
from training.tasks import make_task
from training.trainer import RunReport, TrainConfig, recovery_ratio, train_adapter


def _config(method, **kwargs):
    return TrainConfig(method=MethodSpec.parse(method), **kwargs)


def test_zero_epochs_only_evaluates(small_task):
    report = train_adapter(small_task, _config("svft-p", epochs=0))
    assert report.loss_curve == []
    assert report.final_loss == report.initial_loss
    assert report.recovery == 0.0


def test_plain_svft_reaches_the_noise_floor(planted_task):
    report = train_adapter(planted_task, _config("svft-p", epochs=300, optimizer=OptimizerSpec(lr=0.5)))
    assert report.trainable_params == 16
    assert report.final_loss <= 2.0 * report.reference_loss
    assert report.recovery > 0.99


def test_lora_makes_progress(planted_task):
    config = _config("lora:2", epochs=100, optimizer=OptimizerSpec(kind="adam", lr=0.01))
    report = train_adapter(planted_task, config)
    assert report.trainable_params == 64
    assert report.final_loss < 0.9 * report.initial_loss


def test_divergence_is_reported(planted_task):
    with pytest.raises(DivergenceError) as info:
        train_adapter(planted_task, _config("svft-p", epochs=50, optimizer=OptimizerSpec(lr=10.0)))
    assert info.value.step > 0


def test_minibatch_training_is_deterministic(small_task):
    config = _config("svft-b:1", epochs=20, batch=4, seed=3)
    a = train_adapter(small_task, config)
    b = train_adapter(small_task, config)
    assert a.loss_curve == b.loss_curve
    assert len(a.loss_curve) == 20


def test_truncated_run_counts_restricted_pattern(planted_task):
    config = _config("svft-b:1", epochs=5, truncate_rank=12, truncate_base=True)
    report = train_adapter(planted_task, config)
    assert report.trainable_params == 34
    assert "rank=12" in report.variant and "base-truncated" in report.variant


@pytest.mark.parametrize("method", ["svft-r:20:1", "vera:3", "dora:1", "full"])
def test_every_family_trains(small_task, method):
    report = train_adapter(small_task, _config(method, epochs=10, optimizer=OptimizerSpec(kind="adam", lr=0.01)))
    assert np.isfinite(report.final_loss)
    assert report.final_loss <= report.initial_loss


def test_recovery_ratio():
    assert recovery_ratio(1.0, 0.5, 0.0) == 0.5
    assert recovery_ratio(1.0, 2.0, 0.0) == 0.0
    assert recovery_ratio(1.0, -1.0, 0.0) == 1.0
    assert recovery_ratio(1.0, 0.5, 1.0) == 0.0


def test_report_json(small_task):
    report = train_adapter(small_task, _config("lora:1", epochs=2))
    again = RunReport.model_validate_json(report.to_json())
    assert again.loss_curve == report.loss_curve
    assert again.config == report.config
    assert again.method == "lora"


@pytest.fixture
def low_rank_task():
    return make_task(16, 16, "low_rank:2", seed=5, n_samples=400)


def test_full_fine_tuning_recovers_the_teacher(low_rank_task):
    report = train_adapter(low_rank_task, _config("full", epochs=200, optimizer=OptimizerSpec(lr=0.5)))
    assert report.final_loss <= 1e-8


def test_lora_of_matching_rank_recovers_a_low_rank_teacher(low_rank_task):
    report = train_adapter(low_rank_task, _config("lora:2", epochs=40000, optimizer=OptimizerSpec(lr=0.04)))
    assert report.final_loss <= 1e-10


def test_wider_bands_never_train_worse(planted_task):
    losses = [
        train_adapter(planted_task, _config(f"svft-b:{d}", epochs=300, optimizer=OptimizerSpec(lr=0.5))).final_loss
        for d in (0, 1, 2, 4)
    ]
    assert all(wider <= narrower * (1 + 1e-9) for narrower, wider in zip(losses, losses[1:]))


@pytest.mark.parametrize("method", ["svft-b:1", "full"])
def test_small_steps_decrease_the_loss_every_epoch(planted_task, method):
    report = train_adapter(planted_task, _config(method, epochs=100, optimizer=OptimizerSpec(lr=0.05)))
    assert all(later <= earlier for earlier, later in zip(report.loss_curve, report.loss_curve[1:]))
    assert report.loss_curve[0] <= report.initial_loss
