"""Full model bundle (encoder plus classifier heads), the joint loss and
gradient computation for a batch, prediction, and checkpoint files.

A checkpoint directory holds manifest.json (architecture, parameter names,
shapes and seed provenance), params.bin (raw little-endian IEEE-754 payloads
in manifest order), labels.json, and vocab.tsv.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import LabelSpace, SemanticTriplet
from .encoder import (
    EncoderConfig,
    encoder_backward,
    encoder_forward,
    expected_param_shapes,
    init_encoder_params,
)
from .representation import Batch, Vocabulary
from .stc import StcOutput, decode_batch, expected_stc_shapes, init_stc_params, stc_forward, stc_loss

CHECKPOINT_MANIFEST = "manifest.json"
CHECKPOINT_PARAMS = "params.bin"
CHECKPOINT_LABELS = "labels.json"
CHECKPOINT_VOCAB = "vocab.tsv"


@dataclass
class Model:
    config: EncoderConfig
    labels: LabelSpace
    enc_params: dict[str, np.ndarray]
    stc_params: dict[str, np.ndarray]

    def flat_params(self) -> dict[str, np.ndarray]:
        """Single view over all trainable tensors; values are the live arrays."""
        flat = {f"enc.{k}": v for k, v in self.enc_params.items()}
        flat.update({f"stc.{k}": v for k, v in self.stc_params.items()})
        return flat

    def copy_params(self) -> tuple[dict, dict]:
        return (
            {k: v.copy() for k, v in self.enc_params.items()},
            {k: v.copy() for k, v in self.stc_params.items()},
        )


def init_model(config: EncoderConfig, labels: LabelSpace, seed: int) -> Model:
    enc_seed, stc_seed = derive_seeds(seed, "init", 2)
    return Model(
        config=config,
        labels=labels,
        enc_params=init_encoder_params(config, enc_seed),
        stc_params=init_stc_params(config.d_model, labels, stc_seed, dtype=config.dtype),
    )


def derive_seeds(seed: int, tag: str, n: int) -> list[int]:
    """Stable child seeds from (seed, tag); hash-salt free."""
    entropy = [seed] + [ord(c) for c in tag]
    state = np.random.SeedSequence(entropy).generate_state(n)
    return [int(s) for s in state]


def model_forward(
    model: Model,
    batch: Batch,
    train_mode: bool = False,
    rng_seed: int = 0,
    want_cache: bool = False,
):
    """Run encoder and heads; returns (StcOutput, cache_bundle or None).

    In train mode the pooled vector is dropped out (same rate as the
    encoder) before the heads see it.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(rng_seed)))
    hidden, pooled, cache = encoder_forward(
        batch.token_ids, batch.segment_ids, batch.mask,
        model.enc_params, model.config,
        train_mode=train_mode, rng=rng, want_cache=want_cache,
    )
    head_drop = None
    if train_mode and model.config.dropout > 0:
        from .encoder import _dropout_mask

        head_drop = _dropout_mask(rng, pooled.shape, model.config.dropout, model.config.np_dtype())
        pooled = pooled * head_drop
    out = stc_forward(pooled, model.stc_params, model.labels)
    return out, ({"encoder": cache, "head_drop": head_drop} if want_cache else None)


def model_loss_and_grads(model: Model, batch: Batch, rng_seed: int = 0, train_mode: bool = True):
    """Joint loss with exact gradients for every encoder and head parameter."""
    out, caches = model_forward(model, batch, train_mode=train_mode, rng_seed=rng_seed, want_cache=True)
    loss, d_pooled, stc_grads = stc_loss(out, batch.presence, batch.value_idx, model.stc_params, model.labels)
    if caches["head_drop"] is not None:
        d_pooled = d_pooled * caches["head_drop"]
    enc_grads = encoder_backward(None, d_pooled, caches["encoder"], model.enc_params, model.config)
    return loss, enc_grads, stc_grads


def predict_batch(model: Model, batch: Batch, threshold: float = 0.5) -> tuple[list[set[SemanticTriplet]], StcOutput]:
    out, _ = model_forward(model, batch, train_mode=False)
    return decode_batch(out, model.labels, threshold), out


def _ordered_param_names(model: Model) -> list[tuple[str, str]]:
    names = [("enc", k) for k in sorted(model.enc_params)]
    names += [("stc", k) for k in sorted(model.stc_params)]
    return names


def save_checkpoint(out_dir: str | Path, model: Model, vocab: Vocabulary, seed_info: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    payload = bytearray()
    for group, name in _ordered_param_names(model):
        arr = (model.enc_params if group == "enc" else model.stc_params)[name]
        entries.append({"name": f"{group}.{name}", "shape": list(arr.shape), "dtype": str(arr.dtype)})
        payload += np.ascontiguousarray(arr, dtype=np.dtype(arr.dtype).newbyteorder("<")).tobytes()
    manifest = {
        "format": "nbest-slu-checkpoint",
        "config": model.config.to_json(),
        "labels_fingerprint": model.labels.fingerprint(),
        "vocab_size": len(vocab),
        "seed_provenance": seed_info or {},
        "params": entries,
    }
    tmp = out / (CHECKPOINT_MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    tmp.replace(out / CHECKPOINT_MANIFEST)
    (out / CHECKPOINT_PARAMS).write_bytes(bytes(payload))
    with open(out / CHECKPOINT_LABELS, "w", encoding="utf-8") as f:
        json.dump(model.labels.to_json(), f)
    vocab.save(out / CHECKPOINT_VOCAB)
    return out


def load_checkpoint(ckpt_dir: str | Path) -> tuple[Model, Vocabulary]:
    """Load a checkpoint, validating every payload shape against the config."""
    ckpt = Path(ckpt_dir)
    with open(ckpt / CHECKPOINT_MANIFEST, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != "nbest-slu-checkpoint":
        raise ValueError(f"{ckpt}: not a checkpoint directory")
    config = EncoderConfig.from_json(manifest["config"])
    with open(ckpt / CHECKPOINT_LABELS, encoding="utf-8") as f:
        labels = LabelSpace.from_json(json.load(f))
    vocab = Vocabulary.load(ckpt / CHECKPOINT_VOCAB)
    if len(vocab) != manifest["vocab_size"]:
        raise ValueError(f"{ckpt}: vocab size {len(vocab)} does not match manifest {manifest['vocab_size']}")

    expected = {f"enc.{k}": v for k, v in expected_param_shapes(config).items()}
    expected.update({f"stc.{k}": v for k, v in expected_stc_shapes(config.d_model, labels).items()})
    blob = (ckpt / CHECKPOINT_PARAMS).read_bytes()
    offset = 0
    enc_params: dict[str, np.ndarray] = {}
    stc_params: dict[str, np.ndarray] = {}
    for entry in manifest["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected:
            raise ValueError(f"{ckpt}: unexpected parameter {name}")
        if shape != expected[name]:
            raise ValueError(f"{ckpt}: parameter {name} has shape {shape}, config requires {expected[name]}")
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
        offset += arr.nbytes
        arr = np.ascontiguousarray(arr, dtype=np.dtype(entry["dtype"]))
        group, bare = name.split(".", 1)
        (enc_params if group == "enc" else stc_params)[bare] = arr.copy()
    missing = set(expected) - {e["name"] for e in manifest["params"]}
    if missing:
        raise ValueError(f"{ckpt}: manifest missing parameters {sorted(missing)}")
    if offset != len(blob):
        raise ValueError(f"{ckpt}: params.bin size mismatch ({len(blob)} bytes, consumed {offset})")
    model = Model(config=config, labels=labels, enc_params=enc_params, stc_params=stc_params)
    return model, vocab
