"""Input construction: word vocabulary, tokenization, and the delimited
sequence layout [CLS] + context tokens + one [SEP]-terminated block per
ASR hypothesis, with segment ids separating context (0) from hypotheses (1).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import DatasetSplit, LabelSpace, Sample

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
SEP_ID = 3
RESERVED = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]


@dataclass
class Vocabulary:
    """Word-level vocabulary with fixed reserved ids PAD=0, UNK=1, CLS=2, SEP=3."""

    token_to_id: dict[str, int]
    min_freq: int = 1

    def __post_init__(self):
        for tok, want in zip(RESERVED, range(4)):
            if self.token_to_id.get(tok) != want:
                raise ValueError(f"reserved token {tok} must map to id {want}")
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids must be contiguous from 0")
        self.id_to_token = [""] * len(self.token_to_id)
        for tok, i in self.token_to_id.items():
            self.id_to_token[i] = tok

    def __len__(self) -> int:
        return len(self.token_to_id)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, tok in enumerate(self.id_to_token):
                f.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path: str | Path, min_freq: int = 1) -> "Vocabulary":
        mapping = {}
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    tok, idx = line.split("\t")
                    mapping[tok] = int(idx)
                except ValueError as exc:
                    raise ValueError(f"vocab file line {line_no}: expected 'token<TAB>id'") from exc
        return cls(token_to_id=mapping, min_freq=min_freq)


def build_vocab(train: DatasetSplit, min_freq: int = 1) -> Vocabulary:
    """Count whitespace tokens over system utterances and hypotheses.

    Tokens with frequency >= min_freq enter after the reserved ids, ordered
    by (frequency desc, token asc).
    """
    counts: Counter[str] = Counter()
    for sample in train.samples:
        counts.update(sample.system_utterance.lower().split())
        for hyp in sample.hypotheses:
            counts.update(hyp.text.lower().split())
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    mapping = {tok: i for i, tok in enumerate(RESERVED + kept)}
    return Vocabulary(token_to_id=mapping, min_freq=min_freq)


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Lowercase, split on whitespace, and map each word to its id (UNK if absent)."""
    return [vocab.lookup(tok) for tok in text.lower().split()]


def detokenize(ids: list[int], vocab: Vocabulary) -> str:
    return " ".join(vocab.id_to_token[i] for i in ids)


@dataclass
class TokenSequence:
    """Encoded input for one sample: ids, segment ids, and attention mask.

    Invariants: token_ids[0] is CLS; each included hypothesis block ends with
    one SEP; segment ids are 0 on CLS and context tokens and 1 on every
    hypothesis token and its SEP; length never exceeds the max_len it was
    built with.
    """

    token_ids: list[int]
    segment_ids: list[int]
    attention_mask: list[int]

    def __len__(self) -> int:
        return len(self.token_ids)


def build_input(
    sample: Sample,
    vocab: Vocabulary,
    max_len: int = 128,
    use_context: bool = True,
    n_cap: int = 10,
    sep_after_context: bool = False,
) -> TokenSequence:
    """Build the delimited concatenation of context and N-best hypotheses.

    Layout: [CLS], then the tokenized system utterance when ``use_context``,
    then for each of the first min(N, n_cap) hypotheses its tokens followed
    by one [SEP]. When the layout exceeds ``max_len``, whole hypothesis
    blocks are dropped from the worst-ranked end first; if one block still
    does not fit, context tokens are cut from their right end, and as a last
    resort the remaining hypothesis is itself cut (its [SEP] is always kept).

    ``sep_after_context`` optionally inserts one extra [SEP] (segment 0)
    after the context tokens; the default layout has no delimiter there, the
    segment-id change marks the boundary.
    """
    if n_cap < 1:
        raise ValueError(f"n_cap must be >= 1, got {n_cap}")
    if max_len < 8:
        raise ValueError(f"max_len must be >= 8, got {max_len}")
    if not sample.hypotheses:
        raise ValueError(f"sample {sample.id}: no hypotheses")

    context = tokenize(sample.system_utterance, vocab) if use_context else []
    if sep_after_context and context:
        context = context + [SEP_ID]
    blocks = [tokenize(h.text, vocab) + [SEP_ID] for h in sample.hypotheses[:n_cap]]

    def total_len(n_blocks: int, ctx_len: int) -> int:
        return 1 + ctx_len + sum(len(b) for b in blocks[:n_blocks])

    n_blocks = len(blocks)
    while n_blocks > 1 and total_len(n_blocks, len(context)) > max_len:
        n_blocks -= 1
    ctx_len = len(context)
    if total_len(n_blocks, ctx_len) > max_len:
        ctx_len = max(0, max_len - 1 - len(blocks[0]))
    if 1 + ctx_len + len(blocks[0]) > max_len:
        # A single oversized hypothesis: cut its tokens, keep the final SEP.
        keep = max_len - 1 - ctx_len - 1
        blocks[0] = blocks[0][:keep] + [SEP_ID]

    token_ids = [CLS_ID] + context[:ctx_len]
    segment_ids = [0] * len(token_ids)
    for block in blocks[:n_blocks]:
        token_ids.extend(block)
        segment_ids.extend([1] * len(block))
    return TokenSequence(
        token_ids=token_ids,
        segment_ids=segment_ids,
        attention_mask=[1] * len(token_ids),
    )


@dataclass
class Batch:
    """Padded model input plus encoded gold targets for a batch of samples."""

    ids: list[str]
    token_ids: np.ndarray      # (B, T) int64, PAD-padded
    segment_ids: np.ndarray    # (B, T) int64, 0 on padding
    mask: np.ndarray           # (B, T) int64, 1 on real tokens
    presence: np.ndarray       # (B, P) float64, gold pair-presence bits
    value_idx: np.ndarray      # (B, P) int64, gold value index or -1 when absent

    def __len__(self) -> int:
        return len(self.ids)


def encode_gold(sample: Sample, labels: LabelSpace, strict: bool) -> tuple[np.ndarray, np.ndarray]:
    """Encode a gold triplet set as presence bits and per-pair value indices.

    With ``strict`` (training data), a triplet whose pair or value is outside
    the label space raises; otherwise it is kept for scoring but cannot be
    encoded, so it simply does not contribute a target.
    """
    presence = np.zeros(labels.n_pairs, dtype=np.float64)
    value_idx = np.full(labels.n_pairs, -1, dtype=np.int64)
    for t in sample.gold:
        k = labels.pair_index(t.act, t.slot)
        if k is None:
            if strict:
                raise ValueError(f"sample {sample.id}: pair ({t.act}, {t.slot}) not in label space")
            continue
        presence[k] = 1.0
        if not t.value:
            continue
        vi = labels.value_index(k, t.value)
        if vi is None:
            if strict:
                raise ValueError(
                    f"sample {sample.id}: value {t.value!r} not in label space for pair ({t.act}, {t.slot})"
                )
            continue
        if value_idx[k] == -1:
            # A pair carrying several gold values keeps the first in canonical
            # order as the value target; the rest stay gold for scoring only.
            value_idx[k] = vi
    return presence, value_idx


def make_batches(
    split: DatasetSplit,
    labels: LabelSpace,
    vocab: Vocabulary,
    batch_size: int,
    shuffle_seed: int | None = None,
    max_len: int = 128,
    use_context: bool = True,
    n_cap: int = 10,
    strict: bool = True,
    sep_after_context: bool = False,
) -> list[Batch]:
    """Group a split into padded batches with encoded gold targets.

    ``shuffle_seed`` None keeps file order (dev/test); any integer gives a
    deterministic shuffle. Each batch is padded to its own max length.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = list(range(len(split.samples)))
    if shuffle_seed is not None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(shuffle_seed)))
        order = list(rng.permutation(len(order)))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [split.samples[i] for i in order[start : start + batch_size]]
        seqs = [
            build_input(s, vocab, max_len=max_len, use_context=use_context, n_cap=n_cap,
                        sep_after_context=sep_after_context)
            for s in chunk
        ]
        width = max(len(seq) for seq in seqs)
        b = len(chunk)
        token_ids = np.full((b, width), PAD_ID, dtype=np.int64)
        segment_ids = np.zeros((b, width), dtype=np.int64)
        mask = np.zeros((b, width), dtype=np.int64)
        presence = np.zeros((b, labels.n_pairs), dtype=np.float64)
        value_idx = np.full((b, labels.n_pairs), -1, dtype=np.int64)
        for r, (sample, seq) in enumerate(zip(chunk, seqs)):
            t = len(seq)
            token_ids[r, :t] = seq.token_ids
            segment_ids[r, :t] = seq.segment_ids
            mask[r, :t] = 1
            presence[r], value_idx[r] = encode_gold(sample, labels, strict=strict)
        batches.append(
            Batch(
                ids=[s.id for s in chunk],
                token_ids=token_ids,
                segment_ids=segment_ids,
                mask=mask,
                presence=presence,
                value_idx=value_idx,
            )
        )
    return batches
