import json

import numpy as np
import pytest

from demcl import pipeline as pl
from demcl.config import PipelineConfig
from demcl.errors import InvalidConfigError, InvalidInputError

SMALL_INI = """
[simulation]
duration = 24
[samples]
train_fraction = 0.5
[train]
epochs = 2
[gan]
epochs = 1
[augment]
gan_frames = 20
"""


@pytest.fixture(scope="module")
def small():
    cfg = PipelineConfig.from_ini(SMALL_INI)
    return cfg, pl.prepare_classes(pl.simulate_classes(cfg), cfg)


def test_split_is_contiguous(small):
    cfg, classes = small
    assert [c.label for c in classes] == [0, 1, 2]
    for c in classes:
        assert c.rdms.shape == (360, 16, 32)
        assert c.n_train == 180
        np.testing.assert_array_equal(np.concatenate([c.train_rdms, c.test_rdms]), c.rdms)
    assert pl.split_point(10, 0.8) == 8 and pl.split_point(7, 0.5) == 3


def test_samples_match_tds_columns(small):
    cfg, classes = small
    d = classes[1]
    ds = pl.samples_from_rdms(d.train_rdms, 1, cfg)
    tds = pl.rdms_to_tds(d.train_rdms)
    assert len(ds) == (180 - 45) // 5 + 1
    assert ds.windows.shape == (28, 45, 32) and ds.features.shape == (28, 4)
    np.testing.assert_array_equal(ds.windows[3], tds.columns[15:60])
    assert np.all(ds.labels == 1) and not ds.generated.any()
    assert np.all(ds.features[:, 1] >= ds.features[:, 2])


def test_evenly_spaced_count(small):
    cfg, classes = small
    ds = pl.samples_from_rdms(classes[0].train_rdms, 0, cfg, generated=True, count=4)
    tds = pl.rdms_to_tds(classes[0].train_rdms)
    assert len(ds) == 4 and ds.generated.all()
    np.testing.assert_array_equal(ds.windows[-1], tds.columns[-45:])


def test_flat_generated_windows_are_dropped(small):
    cfg, _ = small
    flat = np.zeros((180, 16, 32))
    assert pl.samples_from_rdms(flat, 0, cfg, generated=True) is None
    with pytest.raises(InvalidInputError):
        pl.samples_from_rdms(flat, 0, cfg)


def test_short_block_rejected(small):
    cfg, classes = small
    with pytest.raises(InvalidInputError):
        pl.samples_from_rdms(classes[0].rdms[:30], 0, cfg)


def test_class_count_checked():
    cfg = PipelineConfig()
    cfg.simulation.n_classes = 9
    with pytest.raises(InvalidConfigError):
        pl.simulate_classes(cfg)


def test_run_is_deterministic(small):
    cfg, classes = small
    a = pl.run_pipeline(cfg, classes)
    b = pl.run_pipeline(cfg, classes)
    text = pl.metrics_json(a.metrics)
    assert text == pl.metrics_json(b.metrics)
    m = json.loads(text)
    assert {"accuracy", "per_class", "confusion", "loss_history"} <= set(m)
    assert [set(h) for h in m["loss_history"]] == [{"epoch", "loss_train", "loss_test"}] * 2
    assert sum(map(sum, m["confusion"])) == m["n_samples"] == len(a.test)
    assert m["n_train_generated"] == 0 and text.endswith("}\n")


def test_augmented_run(small):
    cfg, classes = small
    cfg = PipelineConfig.from_ini(cfg.to_ini())
    cfg.augment.enabled = True
    res = pl.run_pipeline(cfg, classes)
    assert sorted(res.gans) == [0, 1, 2]
    assert all(len(g.history) == 1 for g in res.gans.values())
    n_real = res.metrics["n_train_real"]
    assert 0 <= res.metrics["n_train_generated"] <= 3 * round(0.8 * n_real / 3)
    assert res.train.generated.sum() == res.metrics["n_train_generated"]
    # passing the trained GANs back in reuses them
    again = pl.run_pipeline(cfg, classes, res.gans)
    assert pl.metrics_json(again.metrics) == pl.metrics_json(res.metrics)
