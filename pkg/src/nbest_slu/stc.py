"""Semantic tuple classifier: one binary presence head per act-slot pair and
one multi-class value head per valued pair, over the pooled encoder output.
Valueless pairs get no value head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .corpus import LabelSpace, SemanticTriplet

PROB_CLIP = 1e-12


def expected_stc_shapes(d_model: int, labels: LabelSpace) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "presence_w": (d_model, labels.n_pairs),
        "presence_b": (labels.n_pairs,),
    }
    for k in labels.valued_pair_indices():
        shapes[f"value{k}_w"] = (d_model, len(labels.values[k]))
        shapes[f"value{k}_b"] = (len(labels.values[k]),)
    return shapes


def init_stc_params(d_model: int, labels: LabelSpace, seed: int, dtype: str = "float64") -> dict[str, np.ndarray]:
    from .encoder import _trunc_normal

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    np_dtype = np.dtype(dtype)
    params = {}
    for name, shape in expected_stc_shapes(d_model, labels).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=np_dtype)
        else:
            params[name] = _trunc_normal(rng, shape, 0.02, np_dtype)
    return params


@dataclass
class StcOutput:
    """Batch head outputs: presence probabilities and per valued pair a
    probability distribution over its value vocabulary."""

    pooled: np.ndarray                     # (B, D) input the heads saw
    presence_probs: np.ndarray             # (B, P)
    value_probs: dict[int, np.ndarray]     # pair index -> (B, V_k)


def stc_forward(pooled: np.ndarray, params: dict[str, np.ndarray], labels: LabelSpace) -> StcOutput:
    """Sigmoid presence scores per pair; softmax value scores per valued pair."""
    presence = expit(pooled @ params["presence_w"] + params["presence_b"])
    value_probs = {}
    for k in labels.valued_pair_indices():
        logits = pooled @ params[f"value{k}_w"] + params[f"value{k}_b"]
        logits -= logits.max(axis=-1, keepdims=True)
        e = np.exp(logits)
        value_probs[k] = e / e.sum(axis=-1, keepdims=True)
    return StcOutput(pooled=pooled, presence_probs=presence, value_probs=value_probs)


def stc_loss(
    out: StcOutput,
    presence_gold: np.ndarray,
    value_gold: np.ndarray,
    params: dict[str, np.ndarray],
    labels: LabelSpace,
):
    """Mean-over-batch loss: binary cross-entropy over every pair plus
    categorical cross-entropy over the gold-present valued pairs.

    Value heads of gold-absent pairs contribute zero loss and exactly zero
    gradient. Returns (loss, d_pooled, grads).
    """
    b = out.pooled.shape[0]
    probs = out.presence_probs
    loss = -np.sum(
        presence_gold * np.log(np.maximum(probs, PROB_CLIP))
        + (1.0 - presence_gold) * np.log(np.maximum(1.0 - probs, PROB_CLIP))
    ) / b

    grads = {name: np.zeros_like(p) for name, p in params.items()}
    dlogits = (probs - presence_gold) / b
    grads["presence_w"] += out.pooled.T @ dlogits
    grads["presence_b"] += dlogits.sum(axis=0)
    d_pooled = dlogits @ params["presence_w"].T

    for k in labels.valued_pair_indices():
        idx = value_gold[:, k]
        rows = np.nonzero(idx >= 0)[0]
        if rows.size == 0:
            continue
        n_values = len(labels.values[k])
        if idx[rows].max() >= n_values:
            raise ValueError(f"gold value index out of range for pair {labels.pairs[k]}")
        vp = out.value_probs[k]
        loss += -np.sum(np.log(np.maximum(vp[rows, idx[rows]], PROB_CLIP))) / b
        dv = np.zeros_like(vp)
        dv[rows] = vp[rows] / b
        dv[rows, idx[rows]] -= 1.0 / b
        grads[f"value{k}_w"] += out.pooled.T @ dv
        grads[f"value{k}_b"] += dv.sum(axis=0)
        d_pooled += dv @ params[f"value{k}_w"].T
    return float(loss), d_pooled, grads


def decode_row(
    presence_row: np.ndarray,
    value_rows: dict[int, np.ndarray],
    labels: LabelSpace,
    threshold: float = 0.5,
) -> set[SemanticTriplet]:
    """Emit a triplet for each pair above the presence threshold; valued
    pairs take their argmax value (lowest index wins ties)."""
    decoded = set()
    for k in np.nonzero(presence_row > threshold)[0]:
        act, slot = labels.pairs[k]
        if labels.is_valueless(k):
            decoded.add(SemanticTriplet(act, slot, ""))
        else:
            decoded.add(SemanticTriplet(act, slot, labels.values[k][int(np.argmax(value_rows[k]))]))
    return decoded


def decode_batch(out: StcOutput, labels: LabelSpace, threshold: float = 0.5) -> list[set[SemanticTriplet]]:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    b = out.presence_probs.shape[0]
    return [
        decode_row(out.presence_probs[r], {k: vp[r] for k, vp in out.value_probs.items()}, labels, threshold)
        for r in range(b)
    ]
