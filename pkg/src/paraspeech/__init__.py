"""Context-aware paragraph speech synthesis.

The package reconstructs masked acoustic features of one sentence while
conditioning on the surrounding sentences of the same paragraph, both
through their text (sentence-pair embeddings consumed by cross-utterance
attention) and through their speech (neighbouring mel frames concatenated
around the masked region).  The same model serves training, paragraph
synthesis, and local speech editing.
"""

from .audio import (
    AudioConfig,
    extract_f0,
    extract_mel,
    frame_energy,
    mel_filterbank,
    phoneme_average,
)
from .config import RunConfig, load_config_file
from .context import (
    ContextWindow,
    SentencePair,
    TrainingExample,
    assemble_example,
    build_window,
    derive_pairs,
)
from .corpus import (
    FeatureStore,
    PhonemeVocab,
    Utterance,
    assign_splits,
    ingest,
    load_manifest,
)
from .errors import (
    AlignmentError,
    EditError,
    EmbedderError,
    FrontendError,
    IngestError,
    InvalidConfig,
    InvalidInput,
    InvalidRequest,
    NumericalError,
    ParaspeechError,
)
from .evaluate import EvalReport, dtw_align, evaluate_corpus, f0_metrics, f0_sd, msd
from .frontend import Lexicon
from .model import (
    AcousticModel,
    CUAttentionConfig,
    ModelConfig,
    ModelOutputs,
    load_checkpoint,
    save_checkpoint,
)
from .semantic import (
    HashPairEmbedder,
    PretrainedPairEmbedder,
    cache_pbes,
    embed_pairs,
    load_pbe_cache,
)
from .synth import (
    EDIT,
    FULL_CONTEXT,
    PREV_SPEECH_ONLY,
    TEXT_ONLY,
    SynthesisRequest,
    SynthesisResult,
    Synthesizer,
    mel_to_wave,
    write_wav,
)
from .train import LossBreakdown, TrainConfig, Trainer, compute_losses, lr_schedule

__version__ = "0.1.0"

__all__ = [
    "AcousticModel",
    "AlignmentError",
    "AudioConfig",
    "CUAttentionConfig",
    "ContextWindow",
    "EDIT",
    "EditError",
    "EmbedderError",
    "EvalReport",
    "FULL_CONTEXT",
    "FeatureStore",
    "FrontendError",
    "HashPairEmbedder",
    "IngestError",
    "InvalidConfig",
    "InvalidInput",
    "InvalidRequest",
    "Lexicon",
    "LossBreakdown",
    "ModelConfig",
    "ModelOutputs",
    "NumericalError",
    "PREV_SPEECH_ONLY",
    "ParaspeechError",
    "PhonemeVocab",
    "PretrainedPairEmbedder",
    "RunConfig",
    "SentencePair",
    "SynthesisRequest",
    "SynthesisResult",
    "Synthesizer",
    "TEXT_ONLY",
    "TrainConfig",
    "Trainer",
    "TrainingExample",
    "Utterance",
    "assemble_example",
    "assign_splits",
    "build_window",
    "cache_pbes",
    "compute_losses",
    "derive_pairs",
    "dtw_align",
    "embed_pairs",
    "evaluate_corpus",
    "extract_f0",
    "extract_mel",
    "f0_metrics",
    "f0_sd",
    "frame_energy",
    "ingest",
    "load_checkpoint",
    "load_config_file",
    "load_manifest",
    "load_pbe_cache",
    "mel_filterbank",
    "mel_to_wave",
    "msd",
    "phoneme_average",
    "save_checkpoint",
    "write_wav",
]
