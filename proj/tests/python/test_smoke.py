import math

import numpy as np
import pytest

import simvit


def test_presets_and_costs():
    assert set(simvit.preset_names()) >= {"micro", "tiny", "small", "medium", "large", "micro-reduced"}
    micro = simvit.Config.preset("micro")
    assert [s["channels"] for s in micro.stages] == [32, 64, 160, 256]
    assert micro.stages[3]["attention"] == "global"
    assert micro.reduction == 32
    assert abs(simvit.count_params(micro) / 1e6 - 3.3) / 3.3 <= 0.05
    assert abs(simvit.count_macs(micro, 224, 224) / 1e9 - 0.7) / 0.7 <= 0.15
    assert "total" in simvit.describe(micro)


def test_window_count_preserves_resolution():
    for h in range(1, 20):
        assert simvit.window_count(h, h + 1) == (h, h + 1)
        assert simvit.window_count(h, h, 5, 2, 1) == (h, h)


def test_config_parsing_and_errors():
    cfg = simvit.Config.parse("variant = tiny\ndepths = 2-2-2-2\nnum_classes = 10\n")
    assert [s["depth"] for s in cfg.stages] == [2, 2, 2, 2]
    assert cfg.num_classes == 10
    with pytest.raises(simvit.ConfigError, match="line 2"):
        simvit.Config.parse("variant = micro\nseed = x\n")
    with pytest.raises(ValueError):
        simvit.Config.preset("huge")
    wide = simvit.Config.preset("micro").with_setting("window_sizes", "5-5-5")
    assert wide.stages[0]["window"] == (5, 2, 1)


def test_forward_shapes_and_determinism():
    model = simvit.Model(simvit.Config.preset("micro-reduced", 10), seed=1)
    image = np.random.default_rng(0).uniform(-1, 1, size=(64, 64, 3)).astype(np.float32)
    maps = model.features(image)
    assert [m.shape for m in maps] == [(16, 16, 32), (8, 8, 64), (4, 4, 160), (2, 2, 256)]
    logits = model.forward(image)
    assert logits.shape == (10,)
    assert np.array_equal(logits, simvit.Model(model.config, seed=1).forward(image))
    with pytest.raises(simvit.GeometryError):
        model.forward(np.zeros((40, 40, 3), dtype=np.float32))


def test_weights_round_trip(tmp_path):
    cfg = simvit.Config.preset("micro-reduced", 10)
    model = simvit.Model(cfg, seed=2)
    path = tmp_path / "w.bin"
    model.save(path)
    back = simvit.Model.load(path, cfg)
    for name in model.parameter_names():
        assert np.array_equal(model.parameter(name), back.parameter(name))
    with pytest.raises(simvit.WeightFileError):
        simvit.Model.load(path, simvit.Config.preset("micro", 10))


def test_toy_dataset_and_training():
    data = simvit.ToyDataset(seed=0)
    assert len(data) == 256
    assert data.checksum() == 0x82D5D7E6AFC8C68A
    assert data.images.shape == (256, 32, 32, 3)
    assert data.labels[:12] == [i % 10 for i in range(12)]

    cfg = simvit.Config.parse("stage = 4 16 1 2 1 central\nstage = 2 32 2 2 1 global\nnum_classes = 10\n")
    small = simvit.ToyDataset(seed=3, n=64)
    model = simvit.Model(cfg, seed=3)
    assert abs(simvit.mean_toy_loss(model, small) - math.log(10)) < 0.3
    trace = simvit.train_toy(model, small, epochs=3, seed=3)
    assert [s.epoch for s in trace] == [0, 1, 2]
    assert repr(trace[0]).startswith("epoch 0 loss ")
    again = simvit.Model(cfg, seed=3)
    assert [s.loss for s in simvit.train_toy(again, small, epochs=3, seed=3, workers=2)] == [s.loss for s in trace]
    assert 0.0 <= simvit.evaluate_toy(model, small) <= 1.0


def test_checks():
    assert all(ok for _, ok, _ in simvit.verify(0))
    assert all(ok for _, ok, _ in simvit.gradcheck("kernel", 1))
    with pytest.raises(ValueError):
        simvit.gradcheck("everything")
