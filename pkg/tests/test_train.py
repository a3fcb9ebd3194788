import numpy as np
import pytest

from spbp import autograd as ag
from spbp.autograd import Var
from spbp.network import NetworkConfig, build_network, run_graph
from spbp.train import Adam, TrainConfig, batch_to_tensors, epoch_patches, train_epoch, train_step

TINY = NetworkConfig(f=4, G=2)


@pytest.fixture
def pairs():
    r = np.random.default_rng(8)
    hr = r.integers(0, 256, (2, 24, 20, 3), dtype=np.uint8)
    return [(h[::2, ::2].copy(), h) for h in hr]


def test_from_dict_rejects_unknown():
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"learning_rate": 1})
    assert TrainConfig.from_dict({"epochs": 3}).epochs == 3
    assert TrainConfig.from_dict(TrainConfig(seed=5).to_dict()) == TrainConfig(seed=5)


def test_epoch_patch_count_and_shapes(pairs):
    cfg = TrainConfig(crops_per_image=3, crop_size=6)
    patches = epoch_patches(pairs, cfg, 0)
    assert len(patches) == 6
    assert all(a.shape == (6, 6, 3) and b.shape == (12, 12, 3) for a, b in patches)


def test_epochs_draw_different_patches(pairs):
    cfg = TrainConfig(crops_per_image=2, crop_size=4)
    a = epoch_patches(pairs, cfg, 0)
    b = epoch_patches(pairs, cfg, 1)
    assert any(not np.array_equal(x[0], y[0]) for x, y in zip(a, b))


def test_crop_too_large(pairs):
    with pytest.raises(ValueError):
        epoch_patches(pairs, TrainConfig(crop_size=11), 0)


def test_single_batch_epoch_reports_pre_update_loss(pairs):
    cfg = TrainConfig(crops_per_image=1, crop_size=8, batch_size=1)
    net = build_network(TINY, seed=3)
    before = net.copy()
    (lr_p, hr_p), = epoch_patches(pairs[:1], cfg, 0)
    x, y = batch_to_tensors([(lr_p, hr_p)])
    # the loss is taken on the unclamped output
    unclamped = run_graph(before, {k: Var(v) for k, v in before.params.items()}, Var(x)).value
    expected, _ = ag.l1_loss(unclamped, y)
    loss = train_epoch(net, pairs[:1], cfg, 0)
    assert loss == pytest.approx(expected, rel=1e-6)
    assert any(not np.array_equal(net.params[k], before.params[k]) for k in net.params)


def test_train_step_reduces_loss_on_fixed_batch(pairs):
    cfg = TrainConfig(lr0=1e-3)
    net = build_network(TINY, seed=0)
    opt = Adam(net, cfg)
    x, y = batch_to_tensors([(pairs[0][0][:8, :8], pairs[0][1][:16, :16])])
    losses = [train_step(opt, x, y, 1e-3) for _ in range(30)]
    assert losses[-1] < losses[0]


def test_equal_seeds_bitwise_equal(pairs):
    cfg = TrainConfig(crops_per_image=2, crop_size=6, batch_size=3, seed=11)

    def run():
        net = build_network(TINY, seed=cfg.seed)
        opt = Adam(net, cfg)
        losses = [train_epoch(net, pairs, cfg, e, opt) for e in range(2)]
        return net, losses

    (n1, l1), (n2, l2) = run(), run()
    assert l1 == l2
    assert all(np.array_equal(n1.params[k], n2.params[k]) for k in n1.params)


def test_empty_dataset():
    with pytest.raises(ValueError):
        train_epoch(build_network(TINY), [], TrainConfig(), 0)
