"""Scoring: micro precision/recall/F1 over act-slot-value triplets and
utterance-level exact-set-match accuracy."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .corpus import DatasetSplit, LabelSpace, SemanticTriplet
from .model import Model, load_checkpoint, predict_batch
from .representation import Vocabulary, make_batches


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    n_samples: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, exact: int, n_samples: int) -> "MetricsReport":
        precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
        recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
        if tp + fp + fn == 0:
            f1 = 1.0
        elif tp == 0:
            f1 = 0.0
        else:
            f1 = 2.0 * precision * recall / (precision + recall)
        accuracy = exact / n_samples if n_samples > 0 else 1.0
        return cls(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall,
                   f1=f1, accuracy=accuracy, n_samples=n_samples)

    def to_json(self) -> dict:
        return asdict(self)


def score(
    predictions: dict[str, set[SemanticTriplet]],
    gold: dict[str, set[SemanticTriplet]],
) -> MetricsReport:
    """Micro-averaged counts over all samples; a sample is an exact match
    when its predicted set equals its gold set (empty equals empty)."""
    missing = sorted(set(gold) ^ set(predictions))
    if missing:
        raise ValueError(f"prediction/gold sample ids differ: {missing[:10]}")
    tp = fp = fn = exact = 0
    for sid, pred in predictions.items():
        g = gold[sid]
        tp += len(pred & g)
        fp += len(pred - g)
        fn += len(g - pred)
        exact += int(pred == g)
    return MetricsReport.from_counts(tp, fp, fn, exact, len(predictions))


def evaluate_model(
    model: Model,
    split: DatasetSplit,
    vocab: Vocabulary,
    threshold: float = 0.5,
    use_context: bool = True,
    n_cap: int = 10,
    batch_size: int = 32,
    max_len: int = 128,
    predictions_path: str | Path | None = None,
) -> MetricsReport:
    """Decode a split with dropout disabled and score against gold.

    When ``predictions_path`` is given, one record per sample is written with
    the decoded triplets and the raw presence probabilities (label-space pair
    order), for offline threshold sweeps.
    """
    batches = make_batches(
        split, model.labels, vocab, batch_size,
        shuffle_seed=None, max_len=max_len, use_context=use_context, n_cap=n_cap, strict=False,
    )
    predictions: dict[str, set[SemanticTriplet]] = {}
    records = []
    for batch in batches:
        decoded, out = predict_batch(model, batch, threshold)
        for r, sid in enumerate(batch.ids):
            predictions[sid] = decoded[r]
            if predictions_path is not None:
                records.append(
                    {
                        "id": sid,
                        "triplets": [{"act": t.act, "slot": t.slot, "value": t.value} for t in sorted(decoded[r])],
                        "presence_probs": [round(float(p), 6) for p in out.presence_probs[r]],
                    }
                )
    gold = {s.id: s.gold_set() for s in split.samples}
    report = score(predictions, gold)
    if predictions_path is not None:
        with open(predictions_path, "w", encoding="utf-8") as f:
            for rec in records:
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return report


def evaluate_checkpoint(
    ckpt_dir: str | Path,
    split: DatasetSplit,
    threshold: float = 0.5,
    use_context: bool = True,
    n_cap: int = 10,
    batch_size: int = 32,
    max_len: int = 128,
    predictions_path: str | Path | None = None,
    vocab: Vocabulary | None = None,
    labels: LabelSpace | None = None,
) -> MetricsReport:
    """Load a checkpoint and evaluate it; explicit vocab/labels, when given,
    must match the checkpoint manifest."""
    model, ckpt_vocab = load_checkpoint(ckpt_dir)
    if labels is not None and labels.fingerprint() != model.labels.fingerprint():
        raise ValueError(f"{ckpt_dir}: label space does not match checkpoint manifest")
    if vocab is not None:
        if len(vocab) != len(ckpt_vocab) or vocab.token_to_id != ckpt_vocab.token_to_id:
            raise ValueError(f"{ckpt_dir}: vocabulary does not match checkpoint manifest")
    return evaluate_model(
        model, split, vocab or ckpt_vocab,
        threshold=threshold, use_context=use_context, n_cap=n_cap,
        batch_size=batch_size, max_len=max_len, predictions_path=predictions_path,
    )
