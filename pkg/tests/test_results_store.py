import pytest

from adapters.accounting import MethodSpec
from database.results_store import DatabaseManager
from training.trainer import RunReport, TrainConfig


def _report(method, params, curve, seed=0, truncate_rank=None):
    return RunReport(
        config=TrainConfig(method=MethodSpec.parse(method), seed=seed, epochs=len(curve), truncate_rank=truncate_rank),
        trainable_params=params,
        loss_curve=curve,
        initial_loss=1.0,
        final_loss=curve[-1],
        reference_loss=0.01,
        recovery=0.5,
        wall_ms=1.5,
    )


@pytest.fixture
def db(tmp_path):
    return DatabaseManager(str(tmp_path / "results.db"))


def test_add_and_get_report(db):
    run_id = db.add_report(_report("svft-b:1", 46, [0.5, 0.3, 0.2], seed=3), experiment="planted")
    assert run_id == 1
    (row,) = db.get_reports()
    assert row["method"] == "svft-b"
    assert row["variant"] == "d=1"
    assert row["trainable_params"] == 46
    assert row["seed"] == 3
    assert row["experiment"] == "planted"
    assert row["loss_curve"] == [0.5, 0.3, 0.2]
    assert row["config"]["method"]["knob"] == 1


def test_filters(db):
    db.add_reports([_report("lora:1", 32, [0.4]), _report("lora:2", 64, [0.2])], experiment="a")
    db.add_report(_report("svft-p", 16, [0.3]), experiment="b")
    assert [r["trainable_params"] for r in db.get_reports(method="lora")] == [32, 64]
    assert [r["method"] for r in db.get_reports(experiment="b")] == ["svft-p"]
    assert db.get_reports(method="lora", experiment="b") == []


def test_reset_drops_runs_and_curves(db):
    db.add_report(_report("full", 256, [0.1, 0.05]))
    db.reset_database()
    assert db.get_reports() == []
    conn = db.get_connection()
    try:
        assert conn.execute("SELECT COUNT(*) FROM loss_curves").fetchone()[0] == 0
    finally:
        conn.close()


def test_reopening_keeps_runs(tmp_path):
    path = str(tmp_path / "results.db")
    DatabaseManager(path).add_report(_report("vera:4", 20, [0.6]))
    assert len(DatabaseManager(path).get_reports()) == 1
