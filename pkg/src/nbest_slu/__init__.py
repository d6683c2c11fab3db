"""Spoken language understanding over concatenated N-best ASR hypotheses.

The toolkit ingests dialog data (DSTC2 raw files or a line-delimited
canonical format), builds a single delimited token sequence per user turn
(dialog context followed by every ASR hypothesis, each closed by [SEP]),
encodes it with a from-scratch transformer, and predicts act-slot-value
triplets with per-pair presence classifiers and per-pair value classifiers.
"""

import os as _os

# Cap BLAS threads before numpy is first imported. Takes effect only when
# this package is imported ahead of numpy (true for the CLI entry point).
_threads = _os.environ.get("NBEST_SLU_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .corpus import (  # noqa: E402
    AsrHypothesis,
    DatasetSplit,
    LabelSpace,
    Sample,
    SemanticTriplet,
    build_label_space,
    import_dstc2,
    read_canonical,
    stratified_subsample,
    write_canonical,
)
from .representation import (  # noqa: E402
    Batch,
    TokenSequence,
    Vocabulary,
    build_input,
    build_vocab,
    make_batches,
    tokenize,
)
from .encoder import EncoderConfig, encoder_forward, encoder_backward, init_encoder_params  # noqa: E402
from .stc import decode_batch, init_stc_params, stc_forward, stc_loss  # noqa: E402
from .model import Model, load_checkpoint, save_checkpoint  # noqa: E402
from .evaluation import MetricsReport, evaluate_model, score  # noqa: E402
from .training import TrainConfig, TrainResult, desk_profile, lr_schedule, paper_profile, train  # noqa: E402
from .experiments import SynthSpec, default_synth_spec, generate_synthetic, run_ablation, run_lowdata  # noqa: E402
