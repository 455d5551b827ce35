"""VitConfig・パッチ変換・VisionTransformer のテスト"""

import numpy as np
import pytest

from vitsom.errors import ConfigurationError, ContractError, DimensionError
from vitsom.metrics import accuracy
from vitsom.ndgrad import Tape, Tensor, check_gradients
from vitsom.objective import cross_entropy, mse_loss
from vitsom.trainer import AdamW
from vitsom.vit import (
    Attention,
    Task,
    VisionTransformer,
    VitConfig,
    attention_weights,
    parameter_count,
    patchify,
    unpatchify,
)


@pytest.fixture
def small_clustering():
    return VitConfig(image_size=8, patch_size=4, channels=1, embed_dim=8, mlp_dim=16,
                     encoder_depth=1, decoder_depth=1, num_heads=2)


@pytest.fixture
def small_classification():
    return VitConfig(image_size=8, patch_size=4, channels=3, embed_dim=8, mlp_dim=16,
                     encoder_depth=2, decoder_depth=0, num_heads=2, num_classes=4,
                     task=Task.CLASSIFICATION)


def test_clustering_preset_parameter_count():
    """MNIST用のクラスタリング構成は2,507,056パラメータ"""
    config = VitConfig.clustering(28, 1)
    counts = parameter_count(config)
    assert counts["total"] == 2_507_056
    assert counts["head"] == 0
    assert VisionTransformer(config, rng=0).num_parameters() == counts["total"]


def test_classification_preset_parameter_count():
    """CIFAR-10用の分類構成は5,362,762パラメータ"""
    config = VitConfig.classification(32, 3, 10)
    counts = parameter_count(config)
    assert config.decoder_depth == 0
    assert not config.has_decoder
    assert counts["total"] == 5_362_762
    assert counts["decoder"] == 0
    assert VisionTransformer(config, rng=0).num_parameters() == counts["total"]


def test_analytic_count_matches_built_model(small_clustering, small_classification):
    """解析的な数え上げと実際のテンソル数が一致する"""
    for config in (small_clustering, small_classification):
        assert VisionTransformer(config, rng=1).num_parameters() == \
            parameter_count(config)["total"]


@pytest.mark.parametrize("kwargs, key", [
    (dict(image_size=10, patch_size=4), "patch_size"),
    (dict(embed_dim=9, num_heads=2), "num_heads"),
    (dict(task=Task.CLASSIFICATION), "num_classes"),
    (dict(ln_eps=0.0), "ln_eps"),
])
def test_invalid_configs(kwargs, key):
    """不正な構成はキーを示すConfigurationError"""
    base = dict(image_size=8, patch_size=4, channels=1, embed_dim=8, mlp_dim=16,
                encoder_depth=1, decoder_depth=1, num_heads=2)
    base.update(kwargs)
    with pytest.raises(ConfigurationError) as excinfo:
        VitConfig(**base)
    assert excinfo.value.key == key


def test_config_dict_round_trip(small_classification):
    assert VitConfig.from_dict(small_classification.to_dict()) == small_classification


def test_patchify_layout():
    """パッチは行優先、パッチ内は (行, 列, チャネル) の順"""
    image = np.arange(2 * 4 * 4, dtype=np.float64).reshape(2, 4, 4)
    patches = patchify(image, 2).data
    assert patches.shape == (4, 8)
    # 先頭パッチの左上画素の2チャネル
    np.testing.assert_array_equal(patches[0, :2], [image[0, 0, 0], image[1, 0, 0]])
    # 2番目のパッチは右上
    assert patches[1, 0] == image[0, 0, 2]


def test_unpatchify_inverts_patchify():
    images = np.random.default_rng(0).normal(size=(3, 3, 8, 8))
    restored = unpatchify(patchify(images, 4), 4, 3, 8).data
    np.testing.assert_array_equal(restored, images)


def test_patchify_rejects_indivisible():
    with pytest.raises(ConfigurationError):
        patchify(np.zeros((1, 1, 10, 10)), 4)


def test_attention_weights_are_row_stochastic():
    """注意重みは各行の和が1"""
    attn = Attention(8, 2, rng=0)
    weights = attention_weights(attn, np.random.default_rng(1).normal(size=(5, 8)))
    assert weights.shape == (2, 5, 5)
    np.testing.assert_allclose(weights.sum(axis=-1), np.ones((2, 5)))


def test_forward_shapes_clustering(small_clustering):
    """クラスタリングではx_reconを返しlogitsは無い"""
    model = VisionTransformer(small_clustering, rng=0)
    out = model(np.random.default_rng(0).uniform(size=(3, 1, 8, 8)))
    assert out.z_cls.shape == (3, 8)
    assert out.z_patches.shape == (3, 4, 8)
    assert out.z_som.shape == (3, 32)
    assert out.x_recon.shape == (3, 1, 8, 8)
    assert out.logits is None


def test_forward_shapes_classification(small_classification):
    """分類ではlogitsを返し、decodeはContractError"""
    model = VisionTransformer(small_classification, rng=0)
    out = model(np.random.default_rng(0).uniform(size=(2, 3, 8, 8)))
    assert out.logits.shape == (2, 4)
    assert out.x_recon is None
    with pytest.raises(ContractError):
        model.decode(out.z_patches)


def test_forward_rejects_wrong_image_shape(small_clustering):
    model = VisionTransformer(small_clustering, rng=0)
    with pytest.raises(DimensionError):
        model(np.zeros((2, 3, 8, 8)))


def test_same_seed_same_model(small_clustering):
    """同じシードなら同じ初期値"""
    a = VisionTransformer(small_clustering, rng=5).state_dict()
    b = VisionTransformer(small_clustering, rng=5).state_dict()
    assert all(np.array_equal(a[name], b[name]) for name in a)


def test_initialization(small_clustering):
    """バイアスは0、LayerNormのゲインは1、重みは±2σ=0.04に収まる"""
    model = VisionTransformer(small_clustering, rng=0)
    for name, p in model.named_parameters():
        if name.endswith(".bias"):
            assert np.all(p.data == 0.0), name
        elif name.endswith(".gain"):
            assert np.all(p.data == 1.0), name
        else:
            assert np.abs(p.data).max() <= 0.04, name


def test_reconstruction_gradient(small_clustering):
    """再構成損失の勾配が中心差分と一致する（サンプルした座標）"""
    model = VisionTransformer(small_clustering, rng=0)
    images = Tensor(np.random.default_rng(2).uniform(size=(2, 1, 8, 8)))

    def loss_fn():
        out = model(images)
        diff = out.x_recon - images
        return (diff * diff).mean()

    result = check_gradients(loss_fn, model.parameters(), max_coords=3,
                             rng=np.random.default_rng(0), floor=1e-4)
    assert result.passed(1e-4)


def test_backward_reaches_every_parameter(small_classification):
    """分類損失から全パラメータに勾配が届く"""
    model = VisionTransformer(small_classification, rng=0)
    with Tape() as tape:
        out = model(np.random.default_rng(3).uniform(size=(2, 3, 8, 8)))
        tape.backward((out.logits * out.logits).sum())
    assert all(p.grad is not None for p in model.parameters())


def test_batch_permutation_commutes(small_clustering, small_classification):
    """バッチを並べ替えると encode / decode / classify の出力も同じように並ぶ"""
    perm = np.array([2, 0, 4, 1, 3])
    for config in (small_clustering, small_classification):
        model = VisionTransformer(config, rng=0)
        images = np.random.default_rng(4).uniform(size=(5,) + config.image_shape)
        out = model.encode(images)
        shuffled = model.encode(images[perm])
        np.testing.assert_allclose(shuffled.z_cls.data, out.z_cls.data[perm], atol=1e-12)
        np.testing.assert_allclose(shuffled.z_patches.data, out.z_patches.data[perm],
                                   atol=1e-12)
        if config.has_decoder:
            np.testing.assert_allclose(model.decode(out.z_patches.data[perm]).data,
                                       model.decode(out.z_patches).data[perm], atol=1e-12)
        if config.has_head:
            np.testing.assert_allclose(model.classify(out.z_cls.data[perm]).data,
                                       model.classify(out.z_cls).data[perm], atol=1e-12)


def _fit(model, loss_fn, steps, lr=1e-2, done=None):
    optimizer = AdamW(model.named_parameters(), lr=lr, weight_decay=0.0)
    loss = None
    for _ in range(steps):
        optimizer.zero_grad()
        with Tape() as tape:
            loss = loss_fn()
            tape.backward(loss)
        optimizer.step()
        if done is not None and done():
            break
    return float(loss.data)


def test_reconstruction_overfits_single_batch():
    """1バッチを500ステップ学習すると再構成MSEは0.01未満"""
    config = VitConfig(image_size=8, patch_size=4, channels=1, embed_dim=16, mlp_dim=64,
                       encoder_depth=1, decoder_depth=1, num_heads=2)
    model = VisionTransformer(config, rng=0)
    images = np.random.default_rng(5).uniform(size=(4, 1, 8, 8))
    _fit(model, lambda: mse_loss(model(images).x_recon, images), steps=500)
    assert float(mse_loss(model(images).x_recon, images).data) < 0.01


def test_classification_overfits_small_set():
    """64件の学習データは精度1.0まで覚えられる"""
    config = VitConfig(image_size=8, patch_size=4, channels=3, embed_dim=16, mlp_dim=64,
                       encoder_depth=1, decoder_depth=0, num_heads=2, num_classes=4,
                       task=Task.CLASSIFICATION)
    model = VisionTransformer(config, rng=0)
    rng = np.random.default_rng(6)
    labels = np.arange(64) % 4
    patterns = rng.uniform(size=(4, 3, 8, 8))
    images = 0.5 * patterns[labels] + 0.1 * rng.uniform(size=(64, 3, 8, 8))

    def train_accuracy():
        return accuracy(model(images).logits.data, labels)

    _fit(model, lambda: cross_entropy(model(images).logits, labels), steps=500,
         done=lambda: train_accuracy() == 1.0)
    assert train_accuracy() == 1.0
