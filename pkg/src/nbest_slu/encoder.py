"""From-scratch transformer encoder in numpy with exact reverse-mode gradients.

Post-layernorm sublayer order, GELU feed-forward, learned absolute position
embeddings, and an optional tanh pooler over the leading [CLS] state. All
dropout is inverted (masks scaled at train time), driven deterministically
by an explicit seed so that runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erf

SQRT1_2 = 1.0 / math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
MASK_BIAS = -1e30


@dataclass
class EncoderConfig:
    vocab_size: int
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 512
    max_positions: int = 128
    dropout: float = 0.1
    layernorm_eps: float = 1e-12
    use_pooler: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.vocab_size < 4:
            raise ValueError("vocab_size must cover the reserved tokens")

    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "EncoderConfig":
        return cls(**obj)


def expected_param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Parameter name -> shape map; the single source of truth for init,
    checkpoint validation, and gradient bookkeeping."""
    d, f = config.d_model, config.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab_size, d),
        "pos_emb": (config.max_positions, d),
        "seg_emb": (2, d),
        "emb_ln_g": (d,),
        "emb_ln_b": (d,),
    }
    for i in range(config.n_layers):
        p = f"L{i}."
        shapes[p + "attn_wq"] = (d, d)
        shapes[p + "attn_bq"] = (d,)
        shapes[p + "attn_wk"] = (d, d)
        shapes[p + "attn_bk"] = (d,)
        shapes[p + "attn_wv"] = (d, d)
        shapes[p + "attn_bv"] = (d,)
        shapes[p + "attn_wo"] = (d, d)
        shapes[p + "attn_bo"] = (d,)
        shapes[p + "attn_ln_g"] = (d,)
        shapes[p + "attn_ln_b"] = (d,)
        shapes[p + "ffn_w1"] = (d, f)
        shapes[p + "ffn_b1"] = (f,)
        shapes[p + "ffn_w2"] = (f, d)
        shapes[p + "ffn_b2"] = (d,)
        shapes[p + "ffn_ln_g"] = (d,)
        shapes[p + "ffn_ln_b"] = (d,)
    shapes["pooler_w"] = (d, d)
    shapes["pooler_b"] = (d,)
    return shapes


def _trunc_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float, dtype) -> np.ndarray:
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(dtype)


def init_encoder_params(config: EncoderConfig, seed: int) -> dict[str, np.ndarray]:
    """Truncated-normal(0, 0.02^2) weights, zero biases, unit layernorm gains."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    dtype = config.np_dtype()
    params = {}
    for name, shape in expected_param_shapes(config).items():
        if name.endswith("ln_g"):
            params[name] = np.ones(shape, dtype=dtype)
        elif name.endswith(("_b", "ln_b")) or len(shape) == 1:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            params[name] = _trunc_normal(rng, shape, 0.02, dtype)
    return params


def _layernorm_fwd(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * g + b, xhat, inv


def _layernorm_bwd(dy: np.ndarray, g: np.ndarray, xhat: np.ndarray, inv: np.ndarray):
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
    mean_dxhat_xhat = np.mean(dxhat * xhat, axis=-1, keepdims=True)
    dx = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dg, db


def _dropout_mask(rng: np.random.Generator, shape, rate: float, dtype) -> np.ndarray:
    # Inverted dropout: mask already carries the 1/(1-rate) keep scaling.
    keep = (rng.random(shape) >= rate).astype(dtype)
    return keep / (1.0 - rate)


def _gelu_fwd(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Returns (gelu(x), cdf) with cdf cached so backward pays no second erf.
    cdf = 0.5 * (1.0 + erf(x * SQRT1_2))
    return x * cdf, cdf


def _gelu(x: np.ndarray) -> np.ndarray:
    return _gelu_fwd(x)[0]


def _gelu_grad(x: np.ndarray, cdf: np.ndarray | None = None) -> np.ndarray:
    if cdf is None:
        cdf = 0.5 * (1.0 + erf(x * SQRT1_2))
    return cdf + x * INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _proj(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = x.reshape(-1, x.shape[-1]) @ w + b
    return out.reshape(*x.shape[:-1], w.shape[1])


def encoder_forward(
    token_ids: np.ndarray,
    segment_ids: np.ndarray,
    mask: np.ndarray,
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    train_mode: bool = False,
    rng_seed: int = 0,
    rng: np.random.Generator | None = None,
    want_cache: bool = False,
):
    """Encode a padded batch; returns (hidden (B,T,D), pooled (B,D), cache).

    Masked key positions receive a large negative bias before the attention
    softmax, so padding never influences real positions. Dropout fires only
    in ``train_mode`` and is drawn from ``rng`` (or a generator built from
    ``rng_seed``).
    """
    if token_ids.min() < 0 or token_ids.max() >= config.vocab_size:
        raise ValueError(f"token id out of range [0, {config.vocab_size})")
    b, t = token_ids.shape
    if t > config.max_positions:
        raise ValueError(f"sequence length {t} exceeds max_positions {config.max_positions}")
    if segment_ids.min() < 0 or segment_ids.max() > 1:
        raise ValueError("segment ids must be 0 or 1")

    dtype = config.np_dtype()
    eps = config.layernorm_eps
    rate = config.dropout if train_mode else 0.0
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(rng_seed)))

    cache: dict = {"token_ids": token_ids, "segment_ids": segment_ids, "layers": []}

    e0 = params["tok_emb"][token_ids] + params["pos_emb"][:t][None, :, :] + params["seg_emb"][segment_ids]
    e1, xhat0, inv0 = _layernorm_fwd(e0, params["emb_ln_g"], params["emb_ln_b"], eps)
    emb_mask = _dropout_mask(rng, e1.shape, rate, dtype) if rate > 0 else None
    x = e1 * emb_mask if emb_mask is not None else e1
    cache.update(emb_xhat=xhat0, emb_inv=inv0, emb_drop=emb_mask)

    key_bias = (1.0 - mask.astype(dtype))[:, None, None, :] * MASK_BIAS
    scale = 1.0 / math.sqrt(config.d_model / config.n_heads)

    for i in range(config.n_layers):
        p = f"L{i}."
        q = _split_heads(_proj(x, params[p + "attn_wq"], params[p + "attn_bq"]), config.n_heads)
        k = _split_heads(_proj(x, params[p + "attn_wk"], params[p + "attn_bk"]), config.n_heads)
        v = _split_heads(_proj(x, params[p + "attn_wv"], params[p + "attn_bv"]), config.n_heads)
        scores = np.matmul(q, k.transpose(0, 1, 3, 2)) * scale + key_bias
        scores -= scores.max(axis=-1, keepdims=True)
        exps = np.exp(scores)
        probs = exps / exps.sum(axis=-1, keepdims=True)
        attn_drop = _dropout_mask(rng, probs.shape, rate, dtype) if rate > 0 else None
        probs_d = probs * attn_drop if attn_drop is not None else probs
        ctx = _merge_heads(np.matmul(probs_d, v))
        attn_out = _proj(ctx, params[p + "attn_wo"], params[p + "attn_bo"])
        out_drop = _dropout_mask(rng, attn_out.shape, rate, dtype) if rate > 0 else None
        r1 = x + (attn_out * out_drop if out_drop is not None else attn_out)
        x1, xhat1, inv1 = _layernorm_fwd(r1, params[p + "attn_ln_g"], params[p + "attn_ln_b"], eps)

        f1 = _proj(x1, params[p + "ffn_w1"], params[p + "ffn_b1"])
        g, gelu_cdf = _gelu_fwd(f1)
        f2 = _proj(g, params[p + "ffn_w2"], params[p + "ffn_b2"])
        ffn_drop = _dropout_mask(rng, f2.shape, rate, dtype) if rate > 0 else None
        r2 = x1 + (f2 * ffn_drop if ffn_drop is not None else f2)
        x2, xhat2, inv2 = _layernorm_fwd(r2, params[p + "ffn_ln_g"], params[p + "ffn_ln_b"], eps)

        cache["layers"].append(
            {
                "x_in": x, "q": q, "k": k, "v": v, "probs": probs, "attn_drop": attn_drop,
                "ctx": ctx, "out_drop": out_drop, "xhat1": xhat1, "inv1": inv1,
                "x1": x1, "f1": f1, "g": g, "gelu_cdf": gelu_cdf,
                "ffn_drop": ffn_drop, "xhat2": xhat2, "inv2": inv2,
            }
        )
        x = x2

    hidden = x
    cls = hidden[:, 0, :]
    if config.use_pooler:
        pooled = np.tanh(cls @ params["pooler_w"] + params["pooler_b"])
    else:
        pooled = cls
    cache["cls"] = cls
    cache["pooled"] = pooled
    return hidden, pooled, (cache if want_cache else None)


def encoder_backward(
    d_hidden: np.ndarray | None,
    d_pooled: np.ndarray | None,
    cache: dict,
    params: dict[str, np.ndarray],
    config: EncoderConfig,
) -> dict[str, np.ndarray]:
    """Exact gradients for every encoder parameter given upstream gradients
    on the per-token hidden states and/or the pooled vector."""
    if cache is None:
        raise ValueError("encoder_backward requires the forward cache (want_cache=True)")
    grads = {name: np.zeros(shape, dtype=config.np_dtype()) for name, shape in expected_param_shapes(config).items()}
    layers = cache["layers"]
    b, t, d = layers[-1]["x1"].shape if layers else cache["emb_xhat"].shape
    scale = 1.0 / math.sqrt(config.d_model / config.n_heads)

    dx = np.zeros((b, t, d), dtype=config.np_dtype()) if d_hidden is None else d_hidden.copy()
    if d_pooled is not None:
        if config.use_pooler:
            dz = d_pooled * (1.0 - cache["pooled"] ** 2)
            grads["pooler_w"] += cache["cls"].T @ dz
            grads["pooler_b"] += dz.sum(axis=0)
            dx[:, 0, :] += dz @ params["pooler_w"].T
        else:
            dx[:, 0, :] += d_pooled

    def proj_bwd(x_in, dy, wname, bname):
        x2d = x_in.reshape(-1, x_in.shape[-1])
        dy2d = dy.reshape(-1, dy.shape[-1])
        grads[wname] += x2d.T @ dy2d
        grads[bname] += dy2d.sum(axis=0)
        return (dy2d @ params[wname].T).reshape(x_in.shape)

    for i in reversed(range(config.n_layers)):
        p = f"L{i}."
        c = layers[i]
        dx, dg2, db2 = _layernorm_bwd(dx, params[p + "ffn_ln_g"], c["xhat2"], c["inv2"])
        grads[p + "ffn_ln_g"] += dg2
        grads[p + "ffn_ln_b"] += db2
        df2 = dx * c["ffn_drop"] if c["ffn_drop"] is not None else dx
        dgelu = proj_bwd(c["g"], df2, p + "ffn_w2", p + "ffn_b2")
        df1 = dgelu * _gelu_grad(c["f1"], c["gelu_cdf"])
        dx1 = dx + proj_bwd(c["x1"], df1, p + "ffn_w1", p + "ffn_b1")

        dx1, dg1, db1 = _layernorm_bwd(dx1, params[p + "attn_ln_g"], c["xhat1"], c["inv1"])
        grads[p + "attn_ln_g"] += dg1
        grads[p + "attn_ln_b"] += db1
        dattn = dx1 * c["out_drop"] if c["out_drop"] is not None else dx1
        dctx = proj_bwd(c["ctx"], dattn, p + "attn_wo", p + "attn_bo")
        dctx_h = _split_heads(dctx, config.n_heads)
        probs_d = c["probs"] * c["attn_drop"] if c["attn_drop"] is not None else c["probs"]
        dprobs_d = np.matmul(dctx_h, c["v"].transpose(0, 1, 3, 2))
        dv = np.matmul(probs_d.transpose(0, 1, 3, 2), dctx_h)
        dprobs = dprobs_d * c["attn_drop"] if c["attn_drop"] is not None else dprobs_d
        dscores = c["probs"] * (dprobs - np.sum(dprobs * c["probs"], axis=-1, keepdims=True))
        dscores *= scale
        dq = np.matmul(dscores, c["k"])
        dk = np.matmul(dscores.transpose(0, 1, 3, 2), c["q"])

        x_in = c["x_in"]
        dxq = proj_bwd(x_in, _merge_heads(dq), p + "attn_wq", p + "attn_bq")
        dxk = proj_bwd(x_in, _merge_heads(dk), p + "attn_wk", p + "attn_bk")
        dxv = proj_bwd(x_in, _merge_heads(dv), p + "attn_wv", p + "attn_bv")
        dx = dx1 + dxq + dxk + dxv

    if cache["emb_drop"] is not None:
        dx = dx * cache["emb_drop"]
    de0, dg0, db0 = _layernorm_bwd(dx, params["emb_ln_g"], cache["emb_xhat"], cache["emb_inv"])
    grads["emb_ln_g"] += dg0
    grads["emb_ln_b"] += db0
    np.add.at(grads["tok_emb"], cache["token_ids"], de0)
    grads["pos_emb"][:t] += de0.sum(axis=0)
    np.add.at(grads["seg_emb"], cache["segment_ids"], de0)
    return grads
