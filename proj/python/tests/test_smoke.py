import math

import numpy as np
import pytest

import bevfl


def test_presets_round_trip():
    names = bevfl.preset_names()
    assert names == ["uc1", "uc2", "uc3", "uc4", "uc5"]
    for name in names:
        cfg = bevfl.preset(name)
        assert bevfl.validate_config(cfg) == cfg


def test_unknown_key_is_a_config_error():
    cfg = bevfl.preset("uc1")
    cfg["not_a_field"] = 1
    with pytest.raises(bevfl.ConfigError):
        bevfl.validate_config(cfg)
    with pytest.raises(bevfl.Error):
        bevfl.preset("uc0")


def test_amcm_front_camera_is_a_subset_of_full_rig():
    front = bevfl.amcm_mask("car", [1])
    full = bevfl.amcm_mask("car")
    assert front.shape == full.shape == (16, 16)
    assert front.dtype == np.uint8
    assert np.all(full[front == 1] == 1)
    assert front.sum() < full.sum()


def test_topk_and_aggregate():
    idx, vals, bits = bevfl.compress_topk([3.0, -1.0, 0.5, 2.0], 0.5)
    assert idx == [0, 3] and vals == [3.0, 2.0] and bits == 192
    out = bevfl.aggregate([0.0, 0.0], [[4.0, 0.0], [0.0, 4.0]], [1.0, 3.0])
    assert out == pytest.approx([1.0, 3.0], abs=1e-15)


def test_schedule_and_metrics():
    assert bevfl.lr_schedule(10, 1.0, 20, 60) == 1.0
    assert bevfl.lr_schedule(40, 1.0, 20, 60) == pytest.approx(0.5)
    series = [(t + 1) ** -0.5 for t in range(40)]
    assert bevfl.convergence_diagnostic(series) == pytest.approx(-0.5, abs=1e-12)
    assert bevfl.rounds_to_target([0.1, 0.5, 0.99, 1.0]) == 3


def test_tiny_run(tmp_path):
    cfg = bevfl.preset("uc1")
    cfg.update(rounds=2, warmup_rounds=1, seed=3, scale=0.005)
    report = bevfl.run(cfg, tmp_path)
    assert report["rounds_completed"] == 2
    assert report["secure_aggregation"] == bevfl.SECURE_AGGREGATION
    assert len(report["clients"]) == 3
    header = (tmp_path / "rounds.csv").read_text().splitlines()[0]
    assert header == bevfl.ROUNDS_CSV_HEADER
    assert (tmp_path / "checkpoint.bin").exists()
    again = bevfl.run(cfg, None, threads=2)
    assert again["train_loss"] == report["train_loss"]
    assert all(math.isfinite(x) for x in report["train_loss"])
