import numpy as np
import pytest

from simcse_forge import autograd as ag
from simcse_forge.autograd import Tensor
from simcse_forge.dropout import DropoutPolicy
from simcse_forge.encoder import (EncoderConfig, EncodeResult, ModelParams, embed,
                                  encode, init_params, multi_head_attention,
                                  parameter_count)
from simcse_forge.rng import Rng


def toy_config(**overrides):
    base = dict(vocab_size=23, hidden_dim=8, num_layers=2, num_heads=2,
                ffn_dim=16, max_seq_len=10,
                dropout=DropoutPolicy(kind="standard", p=0.0))
    base.update(overrides)
    return EncoderConfig(**base)


def batch(config, rng_seed=0, b=3, t=5):
    rng = np.random.default_rng(rng_seed)
    ids = rng.integers(4, config.vocab_size, size=(b, t))
    ids[:, 0] = 1   # [CLS]
    lengths = rng.integers(2, t + 1, size=b)
    mask = (np.arange(t)[None, :] < lengths[:, None]).astype(np.float64)
    ids = ids * mask.astype(np.int64)   # pad id 0 beyond length
    ids[:, 0] = 1
    return ids, mask


# -- config validation -----------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        toy_config(hidden_dim=9)
    with pytest.raises(ValueError, match="max_seq_len"):
        toy_config(max_seq_len=1)
    with pytest.raises(ValueError, match="pooling"):
        toy_config(pooling="max")
    with pytest.raises(ValueError, match="positive"):
        toy_config(num_layers=0)


# -- init ------------------------------------------------------------------------

def test_parameter_count_closed_form():
    # independent count from the declared shapes
    cfg = EncoderConfig(vocab_size=100, hidden_dim=16, num_layers=2, num_heads=2,
                        ffn_dim=64, max_seq_len=12)
    v, d, L, f, s = 100, 16, 2, 64, 12
    per_layer = 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d) + 2 * d
    heads = (d * 5 + 5) + (4 * d + 1) + (2 * d + 1) + d * d
    expected = (v * d + s * d + 2 * d        # embeddings + embedding layer norm
                + L * per_layer
                + d * d + d                  # pooler
                + heads
                + 2)                         # adaptive dropout scalars
    params = init_params(cfg, Rng(0))
    assert parameter_count(params) == expected


def test_init_determinism_and_layernorm_values():
    cfg = toy_config()
    p1 = init_params(cfg, Rng(42))
    p2 = init_params(cfg, Rng(42))
    for (n1, t1), (n2, t2) in zip(p1.named_parameters(), p2.named_parameters()):
        assert n1 == n2
        assert np.array_equal(t1.data, t2.data)
    assert np.all(p1.emb_ln_gamma.data == 1.0)
    assert np.all(p1.layers[0].ln1_gamma.data == 1.0)
    assert np.all(p1.layers[1].ln2_beta.data == 0.0)
    assert np.all(p1.pooler_bias.data == 0.0)


def test_init_weight_scale():
    cfg = toy_config(vocab_size=500, hidden_dim=32, num_heads=4)
    params = init_params(cfg, Rng(7))
    w = params.token_embeddings.data
    assert abs(w.std() - 0.02) < 0.002
    assert abs(w.mean()) < 0.002


def test_named_parameters_unique_and_stable():
    params = init_params(toy_config(), Rng(1))
    names = [n for n, _ in params.named_parameters()]
    assert len(names) == len(set(names))
    assert names[0] == "token_embeddings"
    assert "layers.1.ffn.w2" in names
    assert names[-2:] == ["adaptive.alpha", "adaptive.beta"]


def test_params_copy_is_deep():
    params = init_params(toy_config(), Rng(2))
    clone = params.copy()
    clone.token_embeddings.data[0, 0] += 1.0
    clone.layers[0].wq.data[0, 0] += 1.0
    clone.heads.sst_bias.data[0] += 1.0
    assert params.token_embeddings.data[0, 0] != clone.token_embeddings.data[0, 0]
    assert params.layers[0].wq.data[0, 0] != clone.layers[0].wq.data[0, 0]
    assert params.heads.sst_bias.data[0] != clone.heads.sst_bias.data[0]


# -- embed -----------------------------------------------------------------------

def test_embed_single_token_definition():
    cfg = toy_config()
    params = init_params(cfg, Rng(3))
    out = embed(np.array([[7]]), params, cfg)
    raw = params.token_embeddings.data[7] + params.position_embeddings.data[0]
    mu, var = raw.mean(), raw.var()
    expected = (raw - mu) / np.sqrt(var + 1e-5)
    assert np.allclose(out.data[0, 0], expected, atol=1e-12)


def test_embed_identical_rows_for_identical_sentences():
    cfg = toy_config()
    params = init_params(cfg, Rng(3))
    ids = np.array([[1, 5, 6, 2], [1, 5, 6, 2]])
    out = embed(ids, params, cfg)
    assert np.array_equal(out.data[0], out.data[1])


def test_embed_train_dropout_differs_across_passes():
    cfg = toy_config(dropout=DropoutPolicy(kind="standard", p=0.1))
    params = init_params(cfg, Rng(3))
    ids = np.array([[1, 5, 6, 2]])
    rng = Rng(99)
    a = embed(ids, params, cfg, mode="train", rng=rng)
    b = embed(ids, params, cfg, mode="train", rng=rng)
    assert not np.array_equal(a.data, b.data)


def test_embed_validation():
    cfg = toy_config()
    params = init_params(cfg, Rng(0))
    with pytest.raises(ValueError, match="out of range"):
        embed(np.array([[cfg.vocab_size]]), params, cfg)
    with pytest.raises(ValueError, match="out of range"):
        embed(np.array([[-1]]), params, cfg)
    with pytest.raises(ValueError, match="max_seq_len"):
        embed(np.ones((1, cfg.max_seq_len + 1), dtype=int), params, cfg)
    with pytest.raises(ag.ShapeMismatchError):
        embed(np.array([1, 2, 3]), params, cfg)


# -- attention ---------------------------------------------------------------------

def test_attention_single_position_weight_is_one():
    cfg = toy_config()
    params = init_params(cfg, Rng(4))
    h = Tensor(np.random.default_rng(0).normal(size=(1, 1, cfg.hidden_dim)))
    out, weights = multi_head_attention(h, np.ones((1, 1)), params.layers[0],
                                        cfg.num_heads, return_weights=True)
    assert weights.shape == (1, cfg.num_heads, 1, 1)
    assert np.allclose(weights.data, 1.0, atol=1e-15)
    assert out.shape == h.shape


def test_attention_masked_positions_get_zero_weight():
    cfg = toy_config()
    params = init_params(cfg, Rng(5))
    h = Tensor(np.random.default_rng(1).normal(size=(2, 4, cfg.hidden_dim)))
    mask = np.array([[1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 1.0, 0.0]])
    _, weights = multi_head_attention(h, mask, params.layers[0],
                                      cfg.num_heads, return_weights=True)
    assert np.all(np.abs(weights.data[0, :, :, 2:]) <= 1e-12)
    assert np.all(np.abs(weights.data[1, :, :, 3:]) <= 1e-12)
    # rows still normalize over the unmasked keys
    assert np.allclose(weights.data.sum(axis=-1), 1.0, atol=1e-12)


def test_attention_matches_brute_force_two_tokens():
    # hand-rolled numpy attention on a 2-token sequence
    cfg = toy_config(hidden_dim=4, num_heads=2, ffn_dim=8)
    lp = init_params(cfg, Rng(6)).layers[0]
    x = np.random.default_rng(2).normal(size=(1, 2, 4))
    got, got_w = multi_head_attention(Tensor(x), np.ones((1, 2)), lp, 2,
                                      return_weights=True)

    q = x[0] @ lp.wq.data + lp.bq.data
    k = x[0] @ lp.wk.data + lp.bk.data
    v = x[0] @ lp.wv.data + lp.bv.data
    ctx = np.zeros((2, 4))
    for head in range(2):
        sl = slice(head * 2, head * 2 + 2)
        s = (q[:, sl] @ k[:, sl].T) / np.sqrt(2.0)
        e = np.exp(s - s.max(axis=1, keepdims=True))
        w = e / e.sum(axis=1, keepdims=True)
        assert np.allclose(got_w.data[0, head], w, atol=1e-12)
        ctx[:, sl] = w @ v[:, sl]
    proj = ctx @ lp.wo.data + lp.bo.data
    pre = x[0] + proj
    mu = pre.mean(axis=1, keepdims=True)
    var = ((pre - mu) ** 2).mean(axis=1, keepdims=True)
    expected = lp.ln1_gamma.data * (pre - mu) / np.sqrt(var + 1e-5) + lp.ln1_beta.data
    assert np.allclose(got.data[0], expected, atol=1e-10)


def test_attention_shape_errors():
    cfg = toy_config()
    params = init_params(cfg, Rng(0))
    h = Tensor(np.zeros((1, 3, cfg.hidden_dim)))
    with pytest.raises(ag.ShapeMismatchError, match="mask"):
        multi_head_attention(h, np.ones((1, 4)), params.layers[0], cfg.num_heads)
    with pytest.raises(ag.ShapeMismatchError, match="heads"):
        multi_head_attention(h, np.ones((1, 3)), params.layers[0], 3)


# -- encode ------------------------------------------------------------------------

def test_encode_eval_deterministic():
    cfg = toy_config()
    params = init_params(cfg, Rng(8))
    ids, mask = batch(cfg)
    r1 = encode(ids, mask, params, cfg)
    r2 = encode(ids, mask, params, cfg)
    assert isinstance(r1, EncodeResult)
    assert np.array_equal(r1.pooled.data, r2.pooled.data)
    assert np.array_equal(r1.sequence.data, r2.sequence.data)
    assert r1.pooled.shape == (ids.shape[0], cfg.hidden_dim)


def test_encode_train_stochastic():
    cfg = toy_config(dropout=DropoutPolicy(kind="standard", p=0.2))
    params = init_params(cfg, Rng(8))
    ids, mask = batch(cfg)
    rng = Rng(1)
    a = encode(ids, mask, params, cfg, mode="train", rng=rng)
    b = encode(ids, mask, params, cfg, mode="train", rng=rng)
    assert not np.array_equal(a.pooled.data, b.pooled.data)


def test_encode_mode_validation():
    cfg = toy_config()
    params = init_params(cfg, Rng(0))
    ids, mask = batch(cfg)
    with pytest.raises(ValueError, match="mode"):
        encode(ids, mask, params, cfg, mode="test")


def test_encode_batch_permutation_invariance():
    cfg = toy_config()
    params = init_params(cfg, Rng(9))
    ids, mask = batch(cfg, b=4)
    perm = np.array([2, 0, 3, 1])
    r = encode(ids, mask, params, cfg)
    rp = encode(ids[perm], mask[perm], params, cfg)
    assert np.allclose(r.pooled.data[perm], rp.pooled.data, atol=1e-12)


@pytest.mark.parametrize("pooling", ["cls_tanh", "mean"])
def test_encode_pad_token_id_invariance(pooling):
    cfg = toy_config(pooling=pooling)
    params = init_params(cfg, Rng(10))
    ids = np.array([[1, 5, 6, 2, 0, 0]])
    mask = np.array([[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]])
    r1 = encode(ids, mask, params, cfg)
    ids2 = ids.copy()
    ids2[0, 4:] = 9   # different junk under the mask
    r2 = encode(ids2, mask, params, cfg)
    assert np.max(np.abs(r1.pooled.data - r2.pooled.data)) < 1e-10
    real = mask[0].astype(bool)
    assert np.max(np.abs(r1.sequence.data[0, real] - r2.sequence.data[0, real])) < 1e-10


def test_encode_mean_pooling_formula():
    cfg = toy_config(pooling="mean")
    params = init_params(cfg, Rng(11))
    ids = np.array([[1, 5, 2, 0]])
    mask = np.array([[1.0, 1.0, 1.0, 0.0]])
    r = encode(ids, mask, params, cfg)
    manual = r.sequence.data[0, :3].mean(axis=0)
    assert np.allclose(r.pooled.data[0], manual, atol=1e-12)


def test_encode_cls_pooling_formula():
    cfg = toy_config()
    params = init_params(cfg, Rng(12))
    ids, mask = batch(cfg, b=2)
    r = encode(ids, mask, params, cfg)
    manual = np.tanh(r.sequence.data[:, 0, :] @ params.pooler_weight.data
                     + params.pooler_bias.data)
    assert np.allclose(r.pooled.data, manual, atol=1e-12)


def test_encoder_end_to_end_gradient_check():
    # finite differences over every parameter of a 2-layer toy encoder
    cfg = EncoderConfig(vocab_size=9, hidden_dim=4, num_layers=2, num_heads=2,
                        ffn_dim=8, max_seq_len=6,
                        dropout=DropoutPolicy(kind="standard", p=0.0))
    params = init_params(cfg, Rng(13))
    ids = np.array([[1, 4, 5, 2], [1, 6, 2, 0]])
    mask = np.array([[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 0.0]])
    probe = np.random.default_rng(3).normal(size=(2, 4))

    def loss_value():
        r = encode(ids, mask, params, cfg)
        return (r.pooled * Tensor(probe)).sum()

    loss = loss_value()
    loss.backward()

    h = 1e-5
    worst = 0.0
    for name, p in params.named_parameters():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_value().item()
            flat[i] = keep - h
            down = loss_value().item()
            flat[i] = keep
            fd = (up - down) / (2 * h)
            err = abs(gflat[i] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    assert worst < 1e-3


def test_encode_gradient_flows_to_all_encoder_params():
    cfg = toy_config(dropout=DropoutPolicy(kind="standard", p=0.0))
    params = init_params(cfg, Rng(14))
    ids, mask = batch(cfg, b=2, t=4)
    (encode(ids, mask, params, cfg).pooled ** 2.0).sum().backward()
    head_names = {n for n, _ in params.named_parameters() if n.startswith(("heads", "adaptive"))}
    for name, p in params.named_parameters():
        if name in head_names:
            assert p.grad is None   # heads not touched by a bare encode
        else:
            assert p.grad is not None, name
