"""Experiment protocols at desk scale: a synthetic corpus generator, the
low-data-regime sweep (train on a stratified p% subset, test on the full
test split), and the dialog-context ablation (identical runs differing only
in whether the system utterance enters the input).

The synthetic generator is the verification vehicle: hypotheses are
independently word-corrupted copies of a clean templated utterance, and a
configurable share of samples is label-ambiguous unless the system
utterance is part of the input.
"""

from __future__ import annotations

import json
import string
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import (
    AsrHypothesis,
    DatasetSplit,
    Sample,
    SemanticTriplet,
    build_label_space,
    read_canonical,
    stratified_subsample,
    write_canonical,
)
from .encoder import EncoderConfig
from .evaluation import MetricsReport, evaluate_checkpoint
from .manifests import finalize_manifest, read_manifest, start_manifest, verify_data_hashes
from .representation import build_vocab
from .training import TrainConfig, train


@dataclass(frozen=True)
class SynthTemplate:
    """One utterance pattern; ``{name}`` placeholders are filled from the
    spec's value inventories, in the user text, the system text, and the
    triplet values alike."""

    user: str
    triplets: tuple[tuple[str, str, str], ...]
    system: str = ""
    weight: float = 1.0
    context_dependent: bool = False


@dataclass
class SynthSpec:
    values: dict[str, list[str]]
    templates: list[SynthTemplate]
    substitution_prob: float = 0.3
    n_range: tuple[int, int] = (1, 5)
    noise_words: list[str] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.substitution_prob < 1.0:
            raise ValueError(f"substitution_prob must be in [0, 1), got {self.substitution_prob}")
        lo, hi = self.n_range
        if not 1 <= lo <= hi <= 10:
            raise ValueError(f"n_range must satisfy 1 <= lo <= hi <= 10, got {self.n_range}")
        if self.substitution_prob > 0 and not self.noise_words:
            raise ValueError("a nonzero substitution_prob needs noise_words to draw from")

    def to_json(self) -> dict:
        out = asdict(self)
        out["templates"] = [asdict(t) | {"triplets": [list(tr) for tr in t.triplets]} for t in self.templates]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SynthSpec":
        templates = [
            SynthTemplate(
                user=t["user"],
                triplets=tuple(tuple(tr) for tr in t["triplets"]),
                system=t.get("system", ""),
                weight=float(t.get("weight", 1.0)),
                context_dependent=bool(t.get("context_dependent", False)),
            )
            for t in obj["templates"]
        ]
        return cls(
            values={k: list(v) for k, v in obj["values"].items()},
            templates=templates,
            substitution_prob=float(obj.get("substitution_prob", 0.3)),
            n_range=tuple(obj.get("n_range", (1, 5))),
            noise_words=list(obj.get("noise_words", [])),
            seed=int(obj.get("seed", 0)),
        )


NOISE_WORDS = [
    "ack", "bla", "brr", "dud", "fuzz", "gah", "hiss", "hum", "jam", "krr",
    "mur", "nn", "pff", "pop", "quo", "rrr", "shh", "sst", "tch", "thud",
    "vroom", "whir", "zap", "zzz",
]


def default_synth_spec(
    ambiguous_frac: float = 0.3,
    substitution_prob: float = 0.3,
    n_range: tuple[int, int] = (1, 5),
    seed: int = 0,
) -> SynthSpec:
    """Restaurant-flavored inventory. ``ambiguous_frac`` of samples use a
    bare "<value> food" reply whose act (inform vs confirm) is recoverable
    only from the system utterance."""
    if not 0.0 <= ambiguous_frac < 1.0:
        raise ValueError(f"ambiguous_frac must be in [0, 1), got {ambiguous_frac}")
    plain = 1.0 - ambiguous_frac
    templates = [
        SynthTemplate("thank you very much", (("thankyou", "", ""),), weight=0.10 * plain),
        SynthTemplate("good bye see you", (("bye", "", ""),), weight=0.10 * plain),
        SynthTemplate("thank you good bye", (("thankyou", "", ""), ("bye", "", "")), weight=0.11 * plain),
        SynthTemplate("can i get the phone number", (("request", "phone", ""),), weight=0.10 * plain),
        SynthTemplate("whats the address of the place", (("request", "address", ""),), weight=0.10 * plain),
        SynthTemplate(
            "i want some {food} food please", (("inform", "food", "{food}"),), weight=0.16 * plain
        ),
        SynthTemplate(
            "{area} part of town please", (("inform", "area", "{area}"),), weight=0.16 * plain
        ),
        SynthTemplate(
            "i need something {price} to eat", (("inform", "pricerange", "{price}"),), weight=0.09 * plain
        ),
        SynthTemplate(
            "a {price} restaurant serving {food} food",
            (("inform", "pricerange", "{price}"), ("inform", "food", "{food}")),
            weight=0.08 * plain,
        ),
        SynthTemplate(
            "{food} food",
            (("inform", "food", "{food}"),),
            system="what kind of food would you like",
            weight=ambiguous_frac / 2,
            context_dependent=True,
        ),
        SynthTemplate(
            "{food} food",
            (("confirm", "food", "{food}"),),
            system="did you say {food} food",
            weight=ambiguous_frac / 2,
            context_dependent=True,
        ),
    ]
    templates = [t for t in templates if t.weight > 0]
    return SynthSpec(
        values={
            "food": ["british", "chinese", "indian", "italian", "thai"],
            "area": ["centre", "east", "north", "south", "west"],
            "price": ["cheap", "expensive", "moderate"],
        },
        templates=templates,
        substitution_prob=substitution_prob,
        n_range=n_range,
        noise_words=list(NOISE_WORDS),
        seed=seed,
    )


def _placeholders(template: SynthTemplate) -> list[str]:
    names = []
    fmt = string.Formatter()
    for text in (template.user, template.system) + tuple(v for _, _, v in template.triplets):
        for _, name, _, _ in fmt.parse(text):
            if name and name not in names:
                names.append(name)
    return names


def _corrupt(words: list[str], prob: float, noise_words: list[str], rng: np.random.Generator) -> str:
    out = []
    for w in words:
        if prob > 0 and rng.random() < prob:
            out.append(noise_words[int(rng.integers(len(noise_words)))])
        else:
            out.append(w)
    return " ".join(out)


def _generate_split(spec: SynthSpec, name: str, count: int, stream: int) -> DatasetSplit:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, stream])))
    weights = np.array([t.weight for t in spec.templates], dtype=np.float64)
    weights /= weights.sum()
    lo, hi = spec.n_range
    samples = []
    for i in range(count):
        template = spec.templates[int(rng.choice(len(spec.templates), p=weights))]
        fills = {ph: spec.values[ph][int(rng.integers(len(spec.values[ph])))] for ph in _placeholders(template)}
        user = template.user.format(**fills)
        system = template.system.format(**fills)
        gold = tuple(
            sorted({SemanticTriplet(a, s, v.format(**fills)) for a, s, v in template.triplets})
        )
        n = int(rng.integers(lo, hi + 1))
        words = user.split()
        hyps = tuple(
            AsrHypothesis(text=_corrupt(words, spec.substitution_prob, spec.noise_words, rng),
                          score=round(1.0 / (1 + j), 4))
            for j in range(n)
        )
        samples.append(Sample(id=f"{name}-{i:05d}", system_utterance=system,
                              hypotheses=hyps, gold=gold, transcript=user))
    return DatasetSplit(name=name, samples=tuple(samples))


def generate_synthetic(spec: SynthSpec, n_train: int, n_dev: int, n_test: int):
    """Three deterministic splits drawn from the template inventory."""
    if not spec.templates:
        raise ValueError("synthetic spec has an empty template set")
    if min(n_train, n_dev, n_test) < 1:
        raise ValueError("split sizes must be >= 1")
    return (
        _generate_split(spec, "train", n_train, stream=1),
        _generate_split(spec, "dev", n_dev, stream=2),
        _generate_split(spec, "test", n_test, stream=3),
    )


def _train_and_eval(
    train_split: DatasetSplit,
    dev_split: DatasetSplit,
    test_split: DatasetSplit,
    enc_config: EncoderConfig,
    train_config: TrainConfig,
    run_dir: Path,
    min_freq: int = 1,
) -> MetricsReport:
    vocab = build_vocab(train_split, min_freq=min_freq)
    labels = build_label_space(train_split)
    enc_config = replace(enc_config, vocab_size=len(vocab))
    result = train(train_split, dev_split, labels, vocab, enc_config, train_config, run_dir)
    report = evaluate_checkpoint(
        result.checkpoint_dir, test_split,
        threshold=train_config.threshold, use_context=train_config.use_context,
        n_cap=train_config.n_cap, max_len=train_config.max_len,
        predictions_path=run_dir / "predictions.jsonl",
    )
    with open(run_dir / "metrics.json", "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, indent=2)
    return report


def run_lowdata(
    train_file: str | Path,
    dev_file: str | Path,
    test_file: str | Path,
    percents: list[float],
    seed: int,
    enc_config: EncoderConfig,
    train_config: TrainConfig,
    out_dir: str | Path,
    min_freq: int = 1,
) -> list[tuple[float, MetricsReport]]:
    """Train once per percentage on a stratified subset and evaluate every
    run on the same test split; each run directory carries a manifest that
    ``replay_run`` can reproduce exactly."""
    if not percents:
        raise ValueError("percents must be nonempty")
    for p in percents:
        if not 0 < p <= 100:
            raise ValueError(f"percent {p} outside (0, 100]")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dev = read_canonical(dev_file, "dev")
    test = read_canonical(test_file, "test")
    full_train = read_canonical(train_file, "train")
    results = []
    for p in percents:
        run_dir = out / f"p{p:g}"
        run_config = replace(train_config, seed=seed)
        manifest_path = start_manifest(
            run_dir, "lowdata-run",
            config={
                "percent": p,
                "min_freq": min_freq,
                "encoder": enc_config.to_json(),
                "train": run_config.to_json(),
            },
            data_files={"train": train_file, "dev": dev_file, "test": test_file},
            seeds={"seed": seed},
        )
        subset = stratified_subsample(full_train, p, seed)
        report = _train_and_eval(subset, dev, test, enc_config, run_config, run_dir, min_freq)
        finalize_manifest(manifest_path, results=report.to_json())
        results.append((p, report))
    with open(out / "summary.json", "w", encoding="utf-8") as f:
        json.dump(
            [{"percent": p, "f1": r.f1, "accuracy": r.accuracy} for p, r in results],
            f, indent=2,
        )
    return results


def replay_run(manifest_path: str | Path, out_dir: str | Path) -> MetricsReport:
    """Re-execute a recorded lowdata run from its manifest; the input files
    must still hash to the recorded values."""
    manifest = read_manifest(manifest_path)
    if manifest.get("subcommand") != "lowdata-run":
        raise ValueError(f"{manifest_path}: cannot replay subcommand {manifest.get('subcommand')!r}")
    verify_data_hashes(manifest)
    cfg = manifest["config"]
    enc_config = EncoderConfig.from_json(cfg["encoder"])
    train_config = TrainConfig(**cfg["train"])
    data = {role: entry["path"] for role, entry in manifest["data"].items()}
    full_train = read_canonical(data["train"], "train")
    dev = read_canonical(data["dev"], "dev")
    test = read_canonical(data["test"], "test")
    subset = stratified_subsample(full_train, cfg["percent"], manifest["seeds"]["seed"])
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    return _train_and_eval(subset, dev, test, enc_config, train_config, run_dir, cfg["min_freq"])


@dataclass
class AblationResult:
    runs: list[dict]           # one entry per seed: with/without reports
    mean_f1_delta: float
    mean_accuracy_delta: float


def run_ablation(
    train_file: str | Path,
    dev_file: str | Path,
    test_file: str | Path,
    enc_config: EncoderConfig,
    train_config: TrainConfig,
    out_dir: str | Path,
    repeats: int = 1,
    min_freq: int = 1,
) -> AblationResult:
    """Paired runs with and without the system utterance in the input.

    Both runs of a pair share the training data, vocabulary, label space,
    and initialization seed; only the input-builder flag differs, which the
    two run manifests document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dev = read_canonical(dev_file, "dev")
    test = read_canonical(test_file, "test")
    train_split = read_canonical(train_file, "train")
    runs = []
    for r in range(repeats):
        seed = train_config.seed + r
        pair = {"seed": seed}
        for use_context in (True, False):
            tag = "with_context" if use_context else "without_context"
            run_dir = out / f"seed{seed}" / tag
            run_config = replace(train_config, seed=seed, use_context=use_context)
            manifest_path = start_manifest(
                run_dir, "ablate-run",
                config={
                    "min_freq": min_freq,
                    "encoder": enc_config.to_json(),
                    "train": run_config.to_json(),
                },
                data_files={"train": train_file, "dev": dev_file, "test": test_file},
                seeds={"seed": seed},
            )
            report = _train_and_eval(train_split, dev, test, enc_config, run_config, run_dir, min_freq)
            finalize_manifest(manifest_path, results=report.to_json())
            pair[tag] = report.to_json()
        pair["f1_delta"] = pair["with_context"]["f1"] - pair["without_context"]["f1"]
        pair["accuracy_delta"] = pair["with_context"]["accuracy"] - pair["without_context"]["accuracy"]
        runs.append(pair)
    result = AblationResult(
        runs=runs,
        mean_f1_delta=sum(p["f1_delta"] for p in runs) / len(runs),
        mean_accuracy_delta=sum(p["accuracy_delta"] for p in runs) / len(runs),
    )
    with open(out / "summary.json", "w", encoding="utf-8") as f:
        json.dump({"runs": runs, "mean_f1_delta": result.mean_f1_delta,
                   "mean_accuracy_delta": result.mean_accuracy_delta}, f, indent=2)
    return result


def write_synthetic_corpus(spec: SynthSpec, out_dir: str | Path, n_train: int, n_dev: int, n_test: int) -> dict:
    """Generate and write train/dev/test canonical files plus the spec."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_split, dev_split, test_split = generate_synthetic(spec, n_train, n_dev, n_test)
    paths = {}
    for split in (train_split, dev_split, test_split):
        path = out / f"{split.name}.jsonl"
        write_canonical(split, path)
        paths[split.name] = str(path)
    with open(out / "synth_spec.json", "w", encoding="utf-8") as f:
        json.dump(spec.to_json(), f, indent=2)
    return paths
