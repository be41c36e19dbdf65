"""Shared builders for tests: synthetic utterances and tiny model configs."""

import numpy as np

from paraspeech.corpus import PhonemeVocab, Utterance
from paraspeech.model import ModelConfig
from paraspeech.semantic import CUAttentionConfig

VOCAB = PhonemeVocab(["a", "b", "c", "pau"])


def make_utt(uid, pid, index, durations, text="hello", mel_bins=8, seed=0):
    """Utterance with the given per-phoneme frame durations and random mel."""
    rng = np.random.default_rng(seed + index * 97)
    durations = np.asarray(durations, dtype=np.int64)
    T = int(durations.sum())
    phonemes = [["a", "b", "c", "pau"][i % 4] for i in range(len(durations))]
    return Utterance(
        utterance_id=uid,
        paragraph_id=pid,
        index_in_paragraph=index,
        text=text,
        phonemes=phonemes,
        durations=durations,
        f0=rng.uniform(100, 200, T).astype(np.float32),
        energy=rng.uniform(0, 5, T).astype(np.float32),
        mel=rng.standard_normal((T, mel_bins)).astype(np.float32),
        pitch_ph=rng.uniform(100, 200, len(durations)).astype(np.float32),
        energy_ph=rng.uniform(0, 5, len(durations)).astype(np.float32),
    )


def make_paragraph(n, durations_per=((5, 5), (4, 6), (7, 3), (2, 8), (6, 4))):
    return [
        make_utt(f"p_u{i}", "p", i, durations_per[i % len(durations_per)], text=f"s{i}")
        for i in range(n)
    ]


def tiny_config(**overrides) -> ModelConfig:
    """Small but fully wired model; fast enough for per-test construction."""
    base = dict(
        vocab_size=VOCAB.size,
        mel_bins=8,
        d_model=16,
        d_pbe=12,
        encoder_layers=1,
        encoder_heads=2,
        encoder_filters=32,
        encoder_kernel=3,
        decoder_conformer_blocks=1,
        decoder_heads=2,
        decoder_filters=32,
        decoder_kernel=3,
        melenc_filters=16,
        postnet_channels=16,
        variance_filters=16,
        pitch_bins=8,
        energy_bins=8,
        dropout=0.0,
        cu=CUAttentionConfig(heads=2, hidden=16, dropout=0.0),
    )
    base.update(overrides)
    return ModelConfig(**base)


def micro_config(**overrides) -> ModelConfig:
    """Under 5000 parameters, for finite-difference gradient checks."""
    base = dict(
        vocab_size=6,
        mel_bins=4,
        d_model=4,
        d_pbe=4,
        encoder_layers=1,
        encoder_heads=2,
        encoder_filters=4,
        encoder_kernel=3,
        decoder_conformer_blocks=1,
        decoder_heads=2,
        decoder_filters=4,
        decoder_kernel=3,
        melenc_layers=2,
        melenc_filters=4,
        melenc_kernel=3,
        postnet_layers=5,
        postnet_channels=4,
        postnet_kernel=5,
        variance_filters=4,
        variance_kernel=3,
        pitch_bins=4,
        energy_bins=4,
        dropout=0.0,
        cu=CUAttentionConfig(heads=2, hidden=4, dropout=0.0, max_pairs=8),
    )
    base.update(overrides)
    return ModelConfig(**base)
