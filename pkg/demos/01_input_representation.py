#!/usr/bin/env python3
"""Walk through the input representation on a hand-made dialog turn.

The model never sees one ASR hypothesis: every ranked alternative is kept,
each closed by a [SEP] token, and the last system utterance rides along in
front as segment 0. This script prints the exact token/segment layout, then
shows how truncation sheds worst-ranked hypotheses first.
"""

from nbest_slu import build_input, build_vocab, tokenize
from nbest_slu.corpus import AsrHypothesis, DatasetSplit, Sample, SemanticTriplet

sample = Sample(
    id="demo-0",
    system_utterance="what part of town do you have in mind",
    hypotheses=(
        AsrHypothesis("west part of town", -0.11),
        AsrHypothesis("west part of time", -1.52),
        AsrHypothesis("best part of town", -2.70),
    ),
    gold=(SemanticTriplet("inform", "area", "west"),),
    transcript="west part of town",
)
split = DatasetSplit(name="demo", samples=(sample,))
vocab = build_vocab(split, min_freq=1)

print(f"vocabulary ({len(vocab)} entries): {vocab.token_to_id}")
print()

seq = build_input(sample, vocab, max_len=64, use_context=True)
tokens = [vocab.id_to_token[i] for i in seq.token_ids]
print("full layout (context + 3 hypotheses):")
for tok, seg in zip(tokens, seq.segment_ids):
    print(f"  {tok:12s} segment={seg}")
print()

print("dropping the context (ablation input):")
seq_nc = build_input(sample, vocab, max_len=64, use_context=False)
print(" ", " ".join(vocab.id_to_token[i] for i in seq_nc.token_ids))
print()

print("tight budget (max_len=12) keeps the best-ranked hypothesis:")
seq_tight = build_input(sample, vocab, max_len=12, use_context=True)
print(" ", " ".join(vocab.id_to_token[i] for i in seq_tight.token_ids))
print("  separators kept:", seq_tight.token_ids.count(3))

print()
print("tokenize('west part of mars') ->", tokenize("west part of mars", vocab),
      "(unknown word becomes id 1, [UNK])")
