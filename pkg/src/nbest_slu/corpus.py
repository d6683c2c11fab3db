"""Dialog corpus handling: DSTC2 ingestion, canonical interchange files,
label-space construction, and stratified subsampling.

A sample is one user turn: the preceding system utterance, the ranked ASR
hypothesis list (at most 10), an optional manual transcript, and the gold
set of act-slot-value triplets.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MAX_HYPOTHESES = 10


@dataclass(frozen=True, order=True)
class SemanticTriplet:
    """One act-slot-value record; slot and value may be empty strings."""

    act: str
    slot: str = ""
    value: str = ""

    def __post_init__(self):
        if not self.act:
            raise ValueError("triplet act must be nonempty")
        if not self.slot and self.value:
            raise ValueError(f"triplet with empty slot cannot carry value {self.value!r}")


@dataclass(frozen=True)
class AsrHypothesis:
    """A single ASR alternative. ``score`` is kept exactly as provided."""

    text: str
    score: float = 0.0


@dataclass(frozen=True)
class Sample:
    """One user turn with its dialog context and gold annotation.

    ``hypotheses`` are in rank order, best first, and ``gold`` is stored as a
    sorted, duplicate-free tuple so that serialization is deterministic.
    """

    id: str
    system_utterance: str
    hypotheses: tuple[AsrHypothesis, ...]
    gold: tuple[SemanticTriplet, ...]
    transcript: str | None = None

    def __post_init__(self):
        n = len(self.hypotheses)
        if not 1 <= n <= MAX_HYPOTHESES:
            raise ValueError(f"sample {self.id}: hypothesis count {n} outside [1, {MAX_HYPOTHESES}]")
        deduped = tuple(sorted(set(self.gold)))
        if deduped != self.gold:
            object.__setattr__(self, "gold", deduped)

    def gold_set(self) -> set[SemanticTriplet]:
        return set(self.gold)


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    samples: tuple[Sample, ...]

    def __post_init__(self):
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise ValueError(f"duplicate sample id {s.id!r} in split {self.name!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class LabelSpace:
    """Enumerated act-slot pairs plus the legal values of each pair.

    ``values[k]`` is the sorted value vocabulary of ``pairs[k]``; an empty
    list marks a valueless pair (it gets no value classifier downstream).
    """

    pairs: list[tuple[str, str]]
    values: list[list[str]]
    mixed_empty_counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        self._pair_index = {p: k for k, p in enumerate(self.pairs)}
        self._value_index = [{v: i for i, v in enumerate(vals)} for vals in self.values]

    def pair_index(self, act: str, slot: str) -> int | None:
        return self._pair_index.get((act, slot))

    def value_index(self, pair_idx: int, value: str) -> int | None:
        return self._value_index[pair_idx].get(value)

    def is_valueless(self, pair_idx: int) -> bool:
        return not self.values[pair_idx]

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def valued_pair_indices(self) -> list[int]:
        return [k for k in range(len(self.pairs)) if self.values[k]]

    def to_json(self) -> dict:
        return {"pairs": [list(p) for p in self.pairs], "values": self.values}

    @classmethod
    def from_json(cls, obj: dict) -> "LabelSpace":
        return cls(pairs=[tuple(p) for p in obj["pairs"]], values=[list(v) for v in obj["values"]])

    def fingerprint(self) -> str:
        import hashlib

        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def flatten_semantics(acts: list[dict]) -> list[SemanticTriplet]:
    """Flatten a list of {act, slots} records into triplets.

    Each slot-value binding becomes one triplet; an act without slots becomes
    (act, "", ""). A "request" binding ["slot", name] folds the requested
    slot name into the pair, giving the valueless triplet (request, name, "").
    """
    out = []
    for entry in acts:
        act = str(entry["act"]).lower()
        slots = entry.get("slots") or []
        if not slots:
            out.append(SemanticTriplet(act, "", ""))
            continue
        for binding in slots:
            slot, value = str(binding[0]).lower(), str(binding[1]).lower()
            if slot == "slot":
                out.append(SemanticTriplet(act, value, ""))
            else:
                out.append(SemanticTriplet(act, slot, value))
    return out


def _load_call_json(path: Path, call_id: str) -> dict:
    if not path.is_file():
        raise FileNotFoundError(f"call {call_id}: missing {path.name}")
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"call {call_id}: unparseable {path.name}: {exc}") from exc


def import_dstc2(root_dir: str | Path, flist: str | Path, split_name: str = "train") -> DatasetSplit:
    """Import raw DSTC2-style call directories into a DatasetSplit.

    ``flist`` lists call directories relative to ``root_dir``, one per line.
    Each call directory holds ``log.json`` (system turns with transcripts,
    user turns with ranked "live" ASR hypotheses) and ``label.json`` (manual
    transcription plus the semantics act list). One sample is produced per
    user turn; its context is the system transcript delivered immediately
    before the user spoke.
    """
    root = Path(root_dir)
    samples = []
    empty_asr_turns = 0
    with open(flist, encoding="utf-8") as f:
        call_dirs = [line.strip() for line in f if line.strip()]
    for call_id in call_dirs:
        call_path = root / call_id
        log = _load_call_json(call_path / "log.json", call_id)
        label = _load_call_json(call_path / "label.json", call_id)
        log_turns = log.get("turns", [])
        label_turns = label.get("turns", [])
        if len(log_turns) != len(label_turns):
            raise ValueError(
                f"call {call_id}: turn-count mismatch between log ({len(log_turns)}) "
                f"and label ({len(label_turns)}) records"
            )
        for idx, (log_turn, label_turn) in enumerate(zip(log_turns, label_turns)):
            system = str(log_turn.get("output", {}).get("transcript", "") or "").lower()
            raw_hyps = log_turn.get("input", {}).get("live", {}).get("asr-hyps", [])
            hyps = [
                AsrHypothesis(text=str(h.get("asr-hyp", "") or "").lower(), score=float(h.get("score", 0.0)))
                for h in raw_hyps[:MAX_HYPOTHESES]
            ]
            if not hyps:
                # Keep turn parity with the label record when the recognizer
                # produced nothing for this turn.
                hyps = [AsrHypothesis(text="", score=0.0)]
                empty_asr_turns += 1
            triplets = flatten_semantics(label_turn.get("semantics", {}).get("json", []))
            transcript = label_turn.get("transcription")
            samples.append(
                Sample(
                    id=f"{call_id}:{idx}",
                    system_utterance=system,
                    hypotheses=tuple(hyps),
                    gold=tuple(sorted(set(triplets))),
                    transcript=str(transcript).lower() if transcript is not None else None,
                )
            )
    if empty_asr_turns:
        logger.warning("import_dstc2: %d user turns had no ASR hypotheses; kept with one empty hypothesis", empty_asr_turns)
    return DatasetSplit(name=split_name, samples=tuple(samples))


def _sample_to_record(sample: Sample) -> dict:
    rec = {
        "id": sample.id,
        "system": sample.system_utterance,
        "asr_hyps": [{"text": h.text, "score": h.score} for h in sample.hypotheses],
    }
    if sample.transcript is not None:
        rec["transcript"] = sample.transcript
    rec["triplets"] = [{"act": t.act, "slot": t.slot, "value": t.value} for t in sample.gold]
    return rec


def _record_to_sample(rec: dict, line_no: int) -> Sample:
    try:
        hyps = tuple(
            AsrHypothesis(text=str(h["text"]).lower(), score=float(h.get("score", 0.0)))
            for h in rec["asr_hyps"]
        )
        triplets = tuple(
            sorted(
                {
                    SemanticTriplet(str(t["act"]).lower(), str(t.get("slot", "")).lower(), str(t.get("value", "")).lower())
                    for t in rec.get("triplets", [])
                }
            )
        )
        transcript = rec.get("transcript")
        return Sample(
            id=str(rec["id"]),
            system_utterance=str(rec.get("system", "")).lower(),
            hypotheses=hyps,
            gold=triplets,
            transcript=str(transcript).lower() if transcript is not None else None,
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"line {line_no}: malformed record: {exc}") from exc


def read_canonical(path: str | Path, split_name: str | None = None) -> DatasetSplit:
    """Read a line-delimited canonical interchange file into a DatasetSplit."""
    samples = []
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_no}: invalid JSON: {exc}") from exc
            samples.append(_record_to_sample(rec, line_no))
    return DatasetSplit(name=split_name or path.stem, samples=tuple(samples))


def write_canonical(split: DatasetSplit, path: str | Path) -> None:
    """Write a DatasetSplit as line-delimited canonical records."""
    with open(path, "w", encoding="utf-8") as f:
        for sample in split.samples:
            f.write(json.dumps(_sample_to_record(sample), ensure_ascii=False))
            f.write("\n")


def build_label_space(train: DatasetSplit) -> LabelSpace:
    """Enumerate act-slot pairs and per-pair value vocabularies from training gold.

    A pair seen with both empty and nonempty values stays valued; its empty
    occurrences are counted and reported, and they decode later as "pair
    present, value unpredictable".
    """
    value_sets: dict[tuple[str, str], set[str]] = {}
    empty_seen: dict[tuple[str, str], int] = {}
    for sample in train.samples:
        for t in sample.gold:
            pair = (t.act, t.slot)
            value_sets.setdefault(pair, set())
            if t.value:
                value_sets[pair].add(t.value)
            else:
                empty_seen[pair] = empty_seen.get(pair, 0) + 1
    if not value_sets:
        raise ValueError("no labels in training data")
    pairs = sorted(value_sets)
    values = [sorted(value_sets[p]) for p in pairs]
    mixed = {p: empty_seen[p] for p in pairs if value_sets[p] and p in empty_seen}
    for pair, count in mixed.items():
        logger.warning(
            "label space: pair %s seen %d times with an empty value but also with real values; kept valued",
            pair, count,
        )
    return LabelSpace(pairs=pairs, values=values, mixed_empty_counts=mixed)


def label_signature(sample: Sample) -> tuple[tuple[str, str], ...]:
    """Stratum key: the sorted set of gold (act, slot) pairs of a sample."""
    return tuple(sorted({(t.act, t.slot) for t in sample.gold}))


def _stratum_rng(seed: int, key: tuple[tuple[str, str], ...]) -> np.random.Generator:
    import hashlib

    digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed] + words)))


def stratified_subsample(train: DatasetSplit, p: float, seed: int) -> DatasetSplit:
    """Select p percent of samples, stratified by gold label signature.

    Per-stratum quotas are proportional with largest-remainder rounding so
    the total equals round(p% of the split size); selection within a stratum
    is uniform without replacement from a generator seeded by (seed, stratum
    key). The output keeps the original sample order.
    """
    if not 0 < p <= 100:
        raise ValueError(f"p must be in (0, 100], got {p}")
    n = len(train.samples)
    total = int(math.floor(n * p / 100.0 + 0.5))
    strata: dict[tuple, list[int]] = {}
    for i, sample in enumerate(train.samples):
        strata.setdefault(label_signature(sample), []).append(i)
    keys = sorted(strata)
    ideal = {k: len(strata[k]) * total / n for k in keys}
    quota = {k: int(math.floor(ideal[k])) for k in keys}
    leftover = total - sum(quota.values())
    for k in sorted(keys, key=lambda k: (-(ideal[k] - quota[k]), k))[:leftover]:
        quota[k] += 1
    chosen: set[int] = set()
    for k in keys:
        members = strata[k]
        rng = _stratum_rng(seed, k)
        order = rng.permutation(len(members))
        chosen.update(members[j] for j in order[: quota[k]])
    picked = tuple(train.samples[i] for i in sorted(chosen))
    return DatasetSplit(name=f"{train.name}_p{p:g}", samples=picked)
