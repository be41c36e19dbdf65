"""Deterministic toy corpus: paragraphs of synthetic sine-and-noise speech.

Each phoneme is rendered as a whole number of frames, so the alignment files
are exact by construction.  Vowels are harmonic tones with a slow F0
declination across the sentence; consonants are shaped noise; ``pau`` is
silence.  The generator is seeded, so the same seed always produces
byte-identical wav/alignment/manifest files.
"""

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .audio import AudioConfig

VOWELS = {"a": "aa", "e": "ee", "i": "ii", "o": "oo", "u": "uu"}
CONSONANTS = {"s": "s", "t": "t", "k": "k", "f": "f"}
CHAR_TO_PHONEME = {**VOWELS, **CONSONANTS}

WORDS = [
    "sato", "kife", "tusa", "foke", "site",
    "kuta", "feso", "tiku", "safe", "koti",
    "fusa", "teki", "sofu", "kase", "tofi",
]


def word_phonemes(word):
    return [CHAR_TO_PHONEME[ch] for ch in word]


def write_lexicon(path):
    """Word and single-character pronunciations, one `entry ph...` per line."""
    entries = {w: word_phonemes(w) for w in WORDS}
    entries.update({ch: [ph] for ch, ph in CHAR_TO_PHONEME.items()})
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(entries):
            fh.write(key + " " + " ".join(entries[key]) + "\n")


def _tone(f0_hz, n, rate, rng):
    t = np.arange(n) / rate
    phase = 2 * np.pi * rng.uniform(0, 1)
    x = (
        0.60 * np.sin(2 * np.pi * f0_hz * t + phase)
        + 0.25 * np.sin(4 * np.pi * f0_hz * t + 2 * phase)
        + 0.10 * np.sin(6 * np.pi * f0_hz * t + 3 * phase)
    )
    return 0.35 * x


def _noise(n, rng):
    x = rng.standard_normal(n)
    # crude high-pass: difference filter, keeps it clearly aperiodic
    x = np.concatenate([[0.0], np.diff(x)])
    return 0.05 * x


def _ramp(x, n_edge):
    n_edge = min(n_edge, len(x) // 2)
    if n_edge <= 0:
        return x
    edge = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, n_edge))
    x[:n_edge] *= edge
    x[-n_edge:] *= edge[::-1]
    return x


def render_sentence(phonemes, cfg: AudioConfig, rng):
    """Render audio for a phoneme sequence; returns (waveform, frame_durations)."""
    hop = cfg.hop_samples
    durations, chunks = [], []
    n_vowels = max(1, sum(1 for p in phonemes if p in VOWELS.values()))
    vowel_pos = 0
    for ph in phonemes:
        if ph == "pau":
            d = int(rng.integers(4, 9))
            chunk = np.zeros(d * hop)
        elif ph in VOWELS.values():
            d = int(rng.integers(8, 17))
            # declination from ~260 Hz down to ~170 Hz plus jitter
            frac = vowel_pos / n_vowels
            f0 = 260.0 - 90.0 * frac + rng.uniform(-10, 10)
            vowel_pos += 1
            chunk = _ramp(_tone(f0, d * hop, cfg.sample_rate_hz, rng), hop)
        else:
            d = int(rng.integers(5, 11))
            chunk = _ramp(_noise(d * hop, rng), hop // 2)
        durations.append(d)
        chunks.append(chunk)
    return np.concatenate(chunks), durations


def make_toy_corpus(
    out_dir,
    seed: int = 0,
    n_paragraphs: int = 3,
    sentences_per_paragraph: int = 4,
    words_per_sentence=(3, 5),
    cfg: AudioConfig = None,
):
    """Write wav/, align/, manifest.jsonl, lexicon.txt; returns manifest path."""
    cfg = cfg or AudioConfig()
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "align").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    shift_s = cfg.frame_shift_ms / 1000.0

    manifest_lines = []
    for p in range(n_paragraphs):
        paragraph_id = f"p{p:02d}"
        for s in range(sentences_per_paragraph):
            utt_id = f"{paragraph_id}_u{s:02d}"
            n_words = int(rng.integers(words_per_sentence[0], words_per_sentence[1] + 1))
            words = [WORDS[int(rng.integers(len(WORDS)))] for _ in range(n_words)]
            phonemes = ["pau"]
            for w in words:
                phonemes.extend(word_phonemes(w))
            phonemes.append("pau")

            waveform, durations = render_sentence(phonemes, cfg, rng)
            wav_path = out_dir / "wav" / f"{utt_id}.wav"
            wavfile.write(
                wav_path,
                cfg.sample_rate_hz,
                np.clip(waveform * 32767, -32768, 32767).astype(np.int16),
            )

            align_path = out_dir / "align" / f"{utt_id}.txt"
            with open(align_path, "w", encoding="utf-8") as fh:
                start = 0
                for ph, d in zip(phonemes, durations):
                    end = start + d
                    fh.write(f"{ph}\t{start * shift_s:.6f}\t{end * shift_s:.6f}\n")
                    start = end

            manifest_lines.append(
                json.dumps(
                    {
                        "utterance_id": utt_id,
                        "paragraph_id": paragraph_id,
                        "index": s,
                        "text": " ".join(words),
                        "audio_path": str(wav_path),
                        "alignment_path": str(align_path),
                    },
                    sort_keys=True,
                )
            )

    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest_lines) + "\n")
    write_lexicon(out_dir / "lexicon.txt")
    return manifest_path
