import numpy as np
import pytest

from nbest_slu.encoder import (
    EncoderConfig,
    encoder_backward,
    encoder_forward,
    expected_param_shapes,
    init_encoder_params,
)


def tiny_config(**kw):
    base = dict(vocab_size=24, d_model=16, n_layers=2, n_heads=2, d_ff=32,
                max_positions=16, dropout=0.0, dtype="float64")
    base.update(kw)
    return EncoderConfig(**base)


def random_batch(rng, b=3, t=8, vocab=24, pad_tail=0):
    token_ids = rng.integers(4, vocab, size=(b, t))
    token_ids[:, 0] = 2
    segment_ids = np.zeros((b, t), dtype=np.int64)
    segment_ids[:, t // 2:] = 1
    mask = np.ones((b, t), dtype=np.int64)
    if pad_tail:
        token_ids[:, -pad_tail:] = 0
        segment_ids[:, -pad_tail:] = 0
        mask[:, -pad_tail:] = 0
    return token_ids, segment_ids, mask


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError):
            tiny_config(d_model=10, n_heads=4)

    def test_dropout_range(self):
        with pytest.raises(ValueError):
            tiny_config(dropout=1.0)


class TestInit:
    def test_deterministic(self):
        cfg = tiny_config()
        a = init_encoder_params(cfg, seed=5)
        b = init_encoder_params(cfg, seed=5)
        for name in a:
            assert (a[name] == b[name]).all()

    def test_layernorm_gains_one_biases_zero(self):
        params = init_encoder_params(tiny_config(), seed=0)
        assert (params["emb_ln_g"] == 1.0).all()
        assert (params["emb_ln_b"] == 0.0).all()
        assert (params["L0.attn_bq"] == 0.0).all()

    def test_weight_stddev_in_band(self):
        cfg = tiny_config(vocab_size=1000, d_model=32)
        params = init_encoder_params(cfg, seed=1)
        sample = params["tok_emb"].ravel()[:10_000]
        assert 0.015 <= sample.std() <= 0.025
        assert np.abs(sample).max() <= 0.04 + 1e-12

    def test_shapes_match_contract(self):
        cfg = tiny_config()
        params = init_encoder_params(cfg, seed=0)
        for name, shape in expected_param_shapes(cfg).items():
            assert params[name].shape == shape


class TestForward:
    def test_shapes(self):
        cfg = tiny_config()
        params = init_encoder_params(cfg, seed=0)
        token_ids = np.array([[2, 5]])
        seg = np.array([[0, 1]])
        mask = np.array([[1, 1]])
        hidden, pooled, _ = encoder_forward(token_ids, seg, mask, params, cfg)
        assert hidden.shape == (1, 2, cfg.d_model)
        assert pooled.shape == (1, cfg.d_model)

    def test_zero_projections_give_uniform_attention(self):
        cfg = tiny_config(n_layers=1)
        params = init_encoder_params(cfg, seed=0)
        for name in ("L0.attn_wq", "L0.attn_wk"):
            params[name][:] = 0.0
        rng = np.random.default_rng(0)
        token_ids, seg, mask = random_batch(rng, b=2, t=6, pad_tail=2)
        _, _, cache = encoder_forward(token_ids, seg, mask, params, cfg, want_cache=True)
        probs = cache["layers"][0]["probs"]
        n_real = 4
        expected = np.zeros(6)
        expected[:n_real] = 1.0 / n_real
        assert np.allclose(probs[0, 0, 0], expected, atol=1e-12)

    def test_deterministic_under_seed_with_dropout(self):
        cfg = tiny_config(dropout=0.2)
        params = init_encoder_params(cfg, seed=3)
        rng = np.random.default_rng(1)
        token_ids, seg, mask = random_batch(rng)
        _, p1, _ = encoder_forward(token_ids, seg, mask, params, cfg, train_mode=True, rng_seed=99)
        _, p2, _ = encoder_forward(token_ids, seg, mask, params, cfg, train_mode=True, rng_seed=99)
        _, p3, _ = encoder_forward(token_ids, seg, mask, params, cfg, train_mode=True, rng_seed=100)
        assert (p1 == p2).all()
        assert not (p1 == p3).all()

    def test_id_out_of_range_rejected(self):
        cfg = tiny_config()
        params = init_encoder_params(cfg, seed=0)
        bad = np.array([[2, 24]])
        with pytest.raises(ValueError, match="token id"):
            encoder_forward(bad, np.zeros((1, 2), int), np.ones((1, 2), int), params, cfg)
        long_ids = np.full((1, 17), 4)
        with pytest.raises(ValueError, match="max_positions"):
            encoder_forward(long_ids, np.zeros((1, 17), int), np.ones((1, 17), int), params, cfg)

    def test_attention_rows_sum_to_one_and_masked_keys_zero(self):
        cfg = tiny_config(n_layers=2)
        params = init_encoder_params(cfg, seed=7)
        rng = np.random.default_rng(2)
        token_ids, seg, mask = random_batch(rng, b=4, t=10, pad_tail=3)
        _, _, cache = encoder_forward(token_ids, seg, mask, params, cfg, want_cache=True)
        for layer in cache["layers"]:
            probs = layer["probs"]
            assert np.abs(probs.sum(axis=-1) - 1.0).max() < 1e-6
            masked = probs[..., 7:]
            assert masked.max() < 1e-9

    def test_padding_invariance(self):
        cfg = tiny_config(n_layers=2)
        params = init_encoder_params(cfg, seed=11)
        rng = np.random.default_rng(3)
        token_ids, seg, mask = random_batch(rng, b=2, t=8)
        hidden, pooled, _ = encoder_forward(token_ids, seg, mask, params, cfg)
        pad = 8
        token_ids2 = np.pad(token_ids, ((0, 0), (0, pad)))
        seg2 = np.pad(seg, ((0, 0), (0, pad)))
        mask2 = np.pad(mask, ((0, 0), (0, pad)))
        hidden2, pooled2, _ = encoder_forward(token_ids2, seg2, mask2, params, cfg)
        assert np.abs(pooled2 - pooled).max() < 1e-6
        assert np.abs(hidden2[:, :8, :] - hidden).max() < 1e-6

    def test_layernorm_statistics(self):
        cfg = tiny_config()
        params = init_encoder_params(cfg, seed=4)
        rng = np.random.default_rng(5)
        token_ids, seg, mask = random_batch(rng)
        _, _, cache = encoder_forward(token_ids, seg, mask, params, cfg, want_cache=True)
        stats = [cache["emb_xhat"]] + [c[k] for c in cache["layers"] for k in ("xhat1", "xhat2")]
        for xhat in stats:
            assert np.abs(xhat.mean(axis=-1)).max() < 1e-6
            assert np.abs(xhat.var(axis=-1) - 1.0).max() < 1e-4

    def test_token_swap_changes_pooled(self):
        cfg = tiny_config()
        rng = np.random.default_rng(6)
        changed = 0
        for trial in range(5):
            params = init_encoder_params(cfg, seed=100 + trial)
            token_ids, seg, mask = random_batch(rng, b=1, t=8)
            token_ids[0, 3], token_ids[0, 5] = 7, 9
            _, pooled, _ = encoder_forward(token_ids, seg, mask, params, cfg)
            swapped = token_ids.copy()
            swapped[0, 3], swapped[0, 5] = token_ids[0, 5], token_ids[0, 3]
            _, pooled2, _ = encoder_forward(swapped, seg, mask, params, cfg)
            if np.abs(pooled - pooled2).max() > 1e-9:
                changed += 1
        assert changed >= 4

    def test_raw_cls_when_pooler_disabled(self):
        cfg = tiny_config(use_pooler=False)
        params = init_encoder_params(cfg, seed=0)
        rng = np.random.default_rng(7)
        token_ids, seg, mask = random_batch(rng)
        hidden, pooled, _ = encoder_forward(token_ids, seg, mask, params, cfg)
        assert (pooled == hidden[:, 0, :]).all()


class TestBackward:
    def test_missing_cache_rejected(self):
        cfg = tiny_config()
        params = init_encoder_params(cfg, seed=0)
        with pytest.raises(ValueError, match="cache"):
            encoder_backward(None, None, None, params, cfg)

    def test_unused_segment_embedding_gets_zero_grad(self):
        cfg = tiny_config()
        params = init_encoder_params(cfg, seed=1)
        rng = np.random.default_rng(8)
        token_ids, _, mask = random_batch(rng)
        seg = np.zeros_like(token_ids)
        _, pooled, cache = encoder_forward(token_ids, seg, mask, params, cfg, want_cache=True)
        grads = encoder_backward(None, np.ones_like(pooled), cache, params, cfg)
        assert (grads["seg_emb"][1] == 0.0).all()
        assert not (grads["seg_emb"][0] == 0.0).all()

    def test_doubling_upstream_doubles_gradients(self):
        cfg = tiny_config()
        params = init_encoder_params(cfg, seed=2)
        rng = np.random.default_rng(9)
        token_ids, seg, mask = random_batch(rng)
        _, pooled, cache = encoder_forward(token_ids, seg, mask, params, cfg, want_cache=True)
        d = np.ones_like(pooled)
        g1 = encoder_backward(None, d, cache, params, cfg)
        g2 = encoder_backward(None, 2.0 * d, cache, params, cfg)
        for name in g1:
            assert np.allclose(g2[name], 2.0 * g1[name], rtol=0, atol=0)

    def test_finite_differences_with_dropout(self):
        cfg = tiny_config(dropout=0.1)
        params = init_encoder_params(cfg, seed=3)
        rng = np.random.default_rng(10)
        token_ids, seg, mask = random_batch(rng, b=2, t=6, pad_tail=1)
        w = np.asarray(rng.normal(size=(2, cfg.d_model)))

        def loss():
            _, pooled, _ = encoder_forward(token_ids, seg, mask, params, cfg, train_mode=True, rng_seed=55)
            return float((pooled * w).sum())

        _, pooled, cache = encoder_forward(token_ids, seg, mask, params, cfg, train_mode=True, rng_seed=55, want_cache=True)
        grads = encoder_backward(None, w, cache, params, cfg)
        h = 1e-5
        check_rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(120):
            name = list(params)[int(check_rng.integers(len(params)))]
            flat = params[name].reshape(-1)
            i = int(check_rng.integers(flat.size))
            orig = flat[i]
            flat[i] = orig + h
            lp = loss()
            flat[i] = orig - h
            lm = loss()
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            bp = grads[name].reshape(-1)[i]
            worst = max(worst, abs(fd - bp) / max(abs(fd), abs(bp), 1e-6))
        assert worst < 1e-3

    def test_hidden_state_gradients_also_flow(self):
        cfg = tiny_config()
        params = init_encoder_params(cfg, seed=5)
        rng = np.random.default_rng(12)
        token_ids, seg, mask = random_batch(rng, b=2, t=5)
        w = np.asarray(rng.normal(size=(2, 5, cfg.d_model)))

        def loss():
            hidden, _, _ = encoder_forward(token_ids, seg, mask, params, cfg)
            return float((hidden * w).sum())

        hidden, _, cache = encoder_forward(token_ids, seg, mask, params, cfg, want_cache=True)
        grads = encoder_backward(w, None, cache, params, cfg)
        h = 1e-5
        check_rng = np.random.default_rng(13)
        for _ in range(40):
            name = list(params)[int(check_rng.integers(len(params)))]
            if name.startswith("pooler"):
                continue
            flat = params[name].reshape(-1)
            i = int(check_rng.integers(flat.size))
            orig = flat[i]
            flat[i] = orig + h
            lp = loss()
            flat[i] = orig - h
            lm = loss()
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            bp = grads[name].reshape(-1)[i]
            assert abs(fd - bp) / max(abs(fd), abs(bp), 1e-6) < 1e-3
