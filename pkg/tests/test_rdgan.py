import math

import numpy as np
import pytest

from demcl import rdgan
from demcl.errors import InvalidConfigError, InvalidInputError, ShapeMismatchError
from demcl.nn.gradcheck import numeric_grad, relative_error
from demcl.nn.losses import EPS


def frames(n=6, shape=(8, 8), seed=0):
    return np.random.default_rng(seed).uniform(-20, 30, (n,) + shape)


def half_discriminator(shape, channels, name):
    """Discriminator whose head is zeroed, so it outputs exactly 0.5."""
    d = rdgan.build_discriminator(shape, np.random.default_rng(0), channels, name=name)
    dense = d.layers[-2]
    dense.params["W"][...] = 0.0
    dense.params["b"][...] = 0.0
    return d


def test_hand_computed_losses():
    assert rdgan.discriminator_loss(np.array([0.9]), np.array([0.2])) == pytest.approx(
        (-math.log(0.9) - math.log(0.8)) / 2, abs=1e-15)
    assert rdgan.discriminator_loss(np.array([0.8]), np.array([0.3])) == pytest.approx(
        (-math.log(0.8) - math.log(0.7)) / 2, abs=1e-15)
    assert rdgan.generator_loss(np.array([0.4]), np.array([0.6])) == pytest.approx(
        (-math.log(0.4) - math.log(0.6)) / 2, abs=1e-15)
    # the rounded figures quoted for these cases
    assert rdgan.discriminator_loss(np.array([0.9]), np.array([0.2])) == pytest.approx(0.1643, abs=1e-4)
    assert rdgan.discriminator_loss(np.array([0.8]), np.array([0.3])) == pytest.approx(0.2899, abs=1e-4)
    assert rdgan.generator_loss(np.array([0.4]), np.array([0.6])) == pytest.approx(0.7136, abs=1e-4)


def test_perfect_discriminator_limit():
    one = np.array([1 - 1e-15])
    zero = np.array([1e-15])
    assert rdgan.discriminator_loss(one, zero) < 1e-14
    assert rdgan.generator_loss(one, one) < 1e-14
    assert rdgan.discriminator_loss(np.array([0.0]), np.array([1.0])) == pytest.approx(-math.log(EPS))


def test_half_discriminators_give_ln2():
    shape = (8, 8)
    x = frames(4, shape)
    g = rdgan.build_generator(np.random.default_rng(1))
    ds = half_discriminator(shape, (2, 8, 16), "ds")
    dt = half_discriminator(shape, (3, 8, 16), "dt")
    gx = rdgan.g_predict(g, x[1])
    assert abs(rdgan.ds_loss(ds, x[1], x[2], gx) - math.log(2)) <= 1e-12
    assert abs(rdgan.dt_loss(dt, (x[1], x[2], x[3]), (gx, gx, gx)) - math.log(2)) <= 1e-12
    assert abs(rdgan.g_loss(ds, dt, g, x[1], (x[0], x[1], x[2])) - math.log(2)) <= 1e-12


def test_discriminator_outputs_in_open_interval():
    d = rdgan.build_discriminator((8, 8), np.random.default_rng(2), (2, 8, 16))
    out = d(np.random.default_rng(3).uniform(0, 1, (10, 2, 8, 8)))
    assert np.all((out > 0) & (out < 1))


def test_generator_shape_and_zero_init():
    g = rdgan.build_generator(np.random.default_rng(0))
    for shape in [(8, 8), (5, 7), (16, 12)]:
        assert rdgan.g_predict(g, frames(1, shape)[0]).shape == shape
    last = g.layers[-1]
    last.params["W"][...] = 0.0
    last.params["b"][...] = 0.0
    assert np.all(rdgan.g_predict(g, frames(3)) == 0.0)
    with pytest.raises(ShapeMismatchError):
        rdgan.g_predict(g, np.zeros(5))


def test_discriminator_dense_size_follows_shape():
    d = rdgan.build_discriminator((12, 10), np.random.default_rng(0), (3, 8, 16))
    assert d.layers[-2].params["W"].shape == (16 * 3 * 2, 1)


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        rdgan.GanTrainConfig(k_ds=0)
    with pytest.raises(InvalidConfigError):
        rdgan.GanTrainConfig(lr=0)


def test_loop_accounting():
    gan = rdgan.train_gan(frames(5), rdgan.GanTrainConfig(epochs=1))
    assert gan.updates == {"ds": 1, "dt": 1, "g": 1}
    assert len(gan.history) == 1
    gan = rdgan.train_gan(frames(9), rdgan.GanTrainConfig(k_ds=2, k_dt=3, k_g=1, epochs=2, batch_size=4))
    # t in 1..6 gives batches of 4 and 2
    assert gan.updates == {"ds": 8, "dt": 12, "g": 4}


def test_short_sequence_rejected():
    with pytest.raises(InvalidInputError):
        rdgan.train_gan(frames(3), rdgan.GanTrainConfig(epochs=1))


def test_training_is_deterministic():
    cfg = rdgan.GanTrainConfig(epochs=3, lr=0.01, batch_size=3, seed=5)
    a = rdgan.train_gan(frames(8), cfg)
    b = rdgan.train_gan(frames(8), cfg)
    assert a.history == b.history
    assert a.history_csv() == b.history_csv()
    for n1, n2 in zip((a.g, a.ds, a.dt), (b.g, b.ds, b.dt)):
        for (_, x), (_, y) in zip(n1.named_parameters(), n2.named_parameters()):
            assert x.tobytes() == y.tobytes()


def test_losses_nonnegative():
    gan = rdgan.train_gan(frames(8), rdgan.GanTrainConfig(epochs=4, lr=0.05, batch_size=2))
    for h in gan.history:
        assert min(h["loss_g"], h["loss_ds"], h["loss_dt"]) >= 0


def _tiny_gan(shape=(6, 6)):
    g, ds, dt = rdgan.init_gan(shape, seed=3)
    return rdgan.RdGan(g, ds, dt, rdgan.Normalizer(0.0, 1.0))


def _param_check(net, analytic, loss, n=12, seed=0):
    r = np.random.default_rng(seed)
    for name, arr in net.parameters().items():
        idx = r.choice(arr.size, min(n, arr.size), replace=False)
        num = numeric_grad(loss, arr, 1e-6, idx).reshape(-1)[idx]
        assert relative_error(analytic[name].reshape(-1)[idx], num) <= 1e-4, name


def test_update_gradients_match_loss_definitions():
    X = np.random.default_rng(4).uniform(0, 1, (6, 1, 6, 6))
    t = np.array([1, 2, 3])
    gan = _tiny_gan()

    rdgan._update_ds(gan, X, t, 0.0)
    _param_check(gan.ds, {k: v.copy() for k, v in gan.ds.gradients().items()},
                 lambda: rdgan.ds_loss(gan.ds, X[t, 0], X[t + 1, 0], rdgan.g_predict(gan.g, X[t, 0])))

    rdgan._update_dt(gan, X, t, 0.0)
    fake = lambda: [rdgan.g_predict(gan.g, X[s, 0]) for s in (t - 1, t, t + 1)]
    _param_check(gan.dt, {k: v.copy() for k, v in gan.dt.gradients().items()},
                 lambda: rdgan.dt_loss(gan.dt, (X[t, 0], X[t + 1, 0], X[t + 2, 0]), fake()))

    rdgan._update_g(gan, X, t, 0.0)
    _param_check(gan.g, {k: v.copy() for k, v in gan.g.gradients().items()},
                 lambda: rdgan.g_loss(gan.ds, gan.dt, gan.g, X[t, 0], (X[t - 1, 0], X[t, 0], X[t + 1, 0])))


def test_generation_modes():
    g = rdgan.build_generator(np.random.default_rng(0))
    seeds = frames(5)
    assert rdgan.generate_rdm_sequence(g, seeds).shape == (5, 8, 8)
    one = rdgan.generate_rdm_sequence(g, seeds, "rollout", 1)
    np.testing.assert_array_equal(one[0], rdgan.generate_rdm_sequence(g, seeds[-1:])[0])
    roll = rdgan.generate_rdm_sequence(g, seeds, "rollout", 3)
    np.testing.assert_array_equal(roll[1], rdgan.g_predict(g, roll[0]))
    with pytest.raises(InvalidInputError):
        rdgan.generate_rdm_sequence(g, seeds, "rollout", 0)
    with pytest.raises(InvalidInputError):
        rdgan.generate_rdm_sequence(g, np.zeros((0, 8, 8)))
    assert rdgan.parse_mode("rollout:4") == ("rollout", 4)
    with pytest.raises(InvalidInputError):
        rdgan.parse_mode("sideways")


def test_generated_frames_build_matching_tds():
    from demcl.pipeline import rdms_to_tds
    real = frames(20)
    gan = rdgan.train_gan(real, rdgan.GanTrainConfig(epochs=1))
    fake = gan.generate(real)
    E, E2 = rdms_to_tds(real), rdms_to_tds(fake)
    assert E.columns.shape == E2.columns.shape


def test_normalizer_roundtrip():
    x = frames(3)
    n = rdgan.Normalizer.fit(x)
    y = n(x)
    assert y.min() == pytest.approx(0.0, abs=1e-6) and y.max() == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(n.inverse(y), x, atol=1e-12)
    assert np.float32(n.lo) == n.lo and np.float32(n.hi) == n.hi
    assert rdgan.Normalizer.fit(np.full((2, 2), 3.0)).hi == 4.0


def test_checkpoint_and_history_files(tmp_path):
    gan = rdgan.train_gan(frames(6), rdgan.GanTrainConfig(epochs=2), label=2)
    gan.save(tmp_path / "gan.mdck")
    back = rdgan.RdGan.load(tmp_path / "gan.mdck")
    assert back.label == 2 and back.frame_shape == (8, 8)
    x = frames(2, seed=9)
    assert back.generate(x).tobytes() == gan.generate(x).tobytes()
    names = {k.split("/")[0] for k in gan.entries()}
    assert {"g", "ds", "dt"} <= names
    gan.save_history(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss_g,loss_ds,loss_dt" and len(lines) == 3
