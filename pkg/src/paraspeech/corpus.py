"""Corpus ingestion: waveform + transcript + alignment into utterance records.

The prepared store is a directory:

    store.jsonl          one line per utterance (id, paragraph, text,
                         phonemes, split, record path)
    features/<id>.rec    mel/f0/energy/durations + per-phoneme targets
    vocab.json           phoneme symbol table (id 0 reserved for padding)

Everything downstream (context assembly, training, synthesis, evaluation)
reads utterances back through :class:`FeatureStore`.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import records
from .audio import AudioConfig, extract_f0, extract_mel, frame_energy, phoneme_average
from .errors import AlignmentError, IngestError, InvalidInput

F0_SANITY_RANGE = (30.0, 800.0)


@dataclass
class Utterance:
    utterance_id: str
    paragraph_id: str
    index_in_paragraph: int
    text: str
    phonemes: list
    durations: np.ndarray  # int64 [P], frames per phoneme
    f0: np.ndarray  # float32 [T], Hz, 0 = unvoiced
    energy: np.ndarray  # float32 [T]
    mel: np.ndarray  # float32 [T, mel_bins]
    pitch_ph: np.ndarray = None  # float32 [P], voiced-mean F0 per phoneme
    energy_ph: np.ndarray = None  # float32 [P]

    @property
    def n_frames(self) -> int:
        return self.mel.shape[0]

    def validate(self):
        total = int(np.sum(self.durations))
        if len(self.durations) != len(self.phonemes):
            raise AlignmentError(
                self.utterance_id,
                f"{len(self.durations)} durations for {len(self.phonemes)} phonemes",
            )
        if not (total == self.mel.shape[0] == len(self.f0) == len(self.energy)):
            raise AlignmentError(
                self.utterance_id,
                f"durations sum {total}, mel {self.mel.shape[0]}, "
                f"f0 {len(self.f0)}, energy {len(self.energy)}",
            )
        if np.any(self.durations < 0):
            raise AlignmentError(self.utterance_id, "negative phoneme duration")
        voiced = self.f0[self.f0 != 0]
        lo, hi = F0_SANITY_RANGE
        if voiced.size and (voiced.min() < lo or voiced.max() > hi):
            raise AlignmentError(self.utterance_id, "F0 outside plausible range")
        return self

    @classmethod
    def skeleton(cls, utterance_id, text, phonemes, mel_bins, paragraph_id="", index=0):
        """Text-only utterance with zero acoustic frames (for synthesis input)."""
        n = len(phonemes)
        return cls(
            utterance_id=utterance_id,
            paragraph_id=paragraph_id,
            index_in_paragraph=index,
            text=text,
            phonemes=list(phonemes),
            durations=np.zeros(n, dtype=np.int64),
            f0=np.zeros(0, dtype=np.float32),
            energy=np.zeros(0, dtype=np.float32),
            mel=np.zeros((0, mel_bins), dtype=np.float32),
            pitch_ph=np.zeros(n, dtype=np.float32),
            energy_ph=np.zeros(n, dtype=np.float32),
        )


@dataclass
class ManifestEntry:
    utterance_id: str
    paragraph_id: str
    index: int
    text: str
    audio_path: str
    alignment_path: str


def load_manifest(path):
    """Read a JSON Lines manifest; validates id uniqueness and paragraph order."""
    path = Path(path)
    if not path.exists():
        raise IngestError(path, "manifest not found")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entries.append(
                ManifestEntry(
                    utterance_id=rec["utterance_id"],
                    paragraph_id=rec["paragraph_id"],
                    index=int(rec["index"]),
                    text=rec["text"],
                    audio_path=rec["audio_path"],
                    alignment_path=rec["alignment_path"],
                )
            )
    ids = [e.utterance_id for e in entries]
    if len(set(ids)) != len(ids):
        raise InvalidInput("duplicate utterance ids in manifest")
    seen = {}
    for e in entries:
        expected = seen.get(e.paragraph_id, 0)
        if e.index != expected:
            raise InvalidInput(
                f"paragraph {e.paragraph_id}: expected index {expected}, got {e.index}"
            )
        seen[e.paragraph_id] = expected + 1
    return entries


def read_alignment(path):
    """Parse an alignment tier: one `phoneme start_sec end_sec` line per phoneme."""
    path = Path(path)
    if not path.exists():
        raise IngestError(path, "alignment not found")
    intervals = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise IngestError(path, f"malformed alignment line: {line!r}")
            intervals.append((parts[0], float(parts[1]), float(parts[2])))
    return intervals


def durations_from_alignment(intervals, n_frames, frame_shift_s, utterance_id=""):
    """Quantize alignment boundaries to frames with cumulative rounding.

    End boundaries are rounded independently so rounding error never drifts;
    the residual against the actual mel frame count lands on the last
    phoneme.
    """
    if not intervals:
        raise AlignmentError(utterance_id, "empty alignment")
    ends = np.array([end for _, _, end in intervals], dtype=np.float64)
    if np.any(np.diff(ends) < 0) or ends[0] <= 0:
        raise AlignmentError(utterance_id, "alignment boundaries not increasing")
    bounds = np.rint(ends / frame_shift_s).astype(np.int64)
    bounds = np.minimum(bounds, n_frames)
    bounds[-1] = n_frames
    durations = np.diff(np.concatenate([[0], bounds]))
    if np.any(durations < 0):
        raise AlignmentError(utterance_id, "alignment boundaries not increasing")
    return durations


def load_waveform(path, expected_rate):
    path = Path(path)
    if not path.exists():
        raise IngestError(path, "audio not found")
    rate, data = wavfile.read(path)
    if rate != expected_rate:
        raise IngestError(path, f"sample rate {rate} != configured {expected_rate}")
    if data.ndim != 1:
        raise IngestError(path, "expected mono audio")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    return data.astype(np.float64)


def ingest_utterance(entry: ManifestEntry, cfg: AudioConfig) -> Utterance:
    waveform = load_waveform(entry.audio_path, cfg.sample_rate_hz)
    intervals = read_alignment(entry.alignment_path)
    mel = extract_mel(waveform, cfg)
    f0 = extract_f0(waveform, cfg)
    energy = frame_energy(mel)
    durations = durations_from_alignment(
        intervals, mel.shape[0], cfg.frame_shift_ms / 1000.0, entry.utterance_id
    )
    utt = Utterance(
        utterance_id=entry.utterance_id,
        paragraph_id=entry.paragraph_id,
        index_in_paragraph=entry.index,
        text=entry.text,
        phonemes=[ph for ph, _, _ in intervals],
        durations=durations,
        f0=f0,
        energy=energy,
        mel=mel,
        pitch_ph=phoneme_average(f0, durations, voiced_only=True),
        energy_ph=phoneme_average(energy, durations),
    )
    return utt.validate()


def assign_splits(utterance_ids, seed, valid_fraction=0.1, test_fraction=0.1):
    """Deterministic shuffle-based split; returns {utterance_id: split_name}."""
    ids = list(utterance_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_valid = int(round(valid_fraction * len(ids)))
    n_test = int(round(test_fraction * len(ids)))
    split = {}
    for rank, pos in enumerate(order):
        if rank < n_test:
            split[ids[pos]] = "test"
        elif rank < n_test + n_valid:
            split[ids[pos]] = "valid"
        else:
            split[ids[pos]] = "train"
    return split


def ingest(
    manifest_path,
    cfg: AudioConfig,
    out_dir,
    seed: int = 0,
    valid_fraction: float = 0.1,
    test_fraction: float = 0.1,
    workers: int = 1,
):
    """Ingest every manifest entry and write the feature store; returns it."""
    entries = load_manifest(manifest_path)
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            utterances = list(pool.map(lambda e: ingest_utterance(e, cfg), entries))
    else:
        utterances = [ingest_utterance(e, cfg) for e in entries]

    split = assign_splits([e.utterance_id for e in entries], seed, valid_fraction, test_fraction)

    symbols = sorted({ph for utt in utterances for ph in utt.phonemes})
    with open(out_dir / "vocab.json", "w", encoding="utf-8") as fh:
        json.dump({"symbols": symbols}, fh, sort_keys=True)
        fh.write("\n")

    lines = []
    for utt in utterances:
        rel = f"features/{utt.utterance_id}.rec"
        records.write_record(
            out_dir / rel,
            {
                "mel": utt.mel,
                "f0": utt.f0,
                "energy": utt.energy,
                "durations": utt.durations.astype(np.float32),
                "pitch_ph": utt.pitch_ph,
                "energy_ph": utt.energy_ph,
            },
            meta={"utterance_id": utt.utterance_id},
        )
        lines.append(
            json.dumps(
                {
                    "utterance_id": utt.utterance_id,
                    "paragraph_id": utt.paragraph_id,
                    "index": utt.index_in_paragraph,
                    "text": utt.text,
                    "phonemes": utt.phonemes,
                    "split": split[utt.utterance_id],
                    "record": rel,
                },
                sort_keys=True,
            )
        )
    tmp = out_dir / "store.jsonl.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, out_dir / "store.jsonl")
    return FeatureStore.load(out_dir)


class PhonemeVocab:
    """Phoneme symbol table; id 0 is reserved for padding."""

    def __init__(self, symbols):
        self.symbols = list(symbols)
        self._index = {s: i + 1 for i, s in enumerate(self.symbols)}

    @property
    def size(self) -> int:
        return len(self.symbols) + 1

    def encode(self, phonemes) -> np.ndarray:
        try:
            return np.array([self._index[p] for p in phonemes], dtype=np.int64)
        except KeyError as exc:
            raise InvalidInput(f"phoneme {exc.args[0]!r} not in vocabulary") from None

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh)["symbols"])


@dataclass
class FeatureStore:
    root: Path
    utterances: dict  # utterance_id -> Utterance
    paragraphs: dict  # paragraph_id -> ordered list of utterance_ids
    splits: dict  # split name -> list of utterance_ids
    vocab: PhonemeVocab

    @classmethod
    def load(cls, root):
        root = Path(root)
        store_path = root / "store.jsonl"
        if not store_path.exists():
            raise IngestError(store_path, "feature store not found")
        utterances, paragraphs = {}, {}
        splits = {"train": [], "valid": [], "test": []}
        with open(store_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                arrays, _ = records.read_record(root / rec["record"])
                utt = Utterance(
                    utterance_id=rec["utterance_id"],
                    paragraph_id=rec["paragraph_id"],
                    index_in_paragraph=rec["index"],
                    text=rec["text"],
                    phonemes=rec["phonemes"],
                    durations=arrays["durations"].astype(np.int64),
                    f0=arrays["f0"],
                    energy=arrays["energy"],
                    mel=arrays["mel"],
                    pitch_ph=arrays["pitch_ph"],
                    energy_ph=arrays["energy_ph"],
                )
                utterances[utt.utterance_id] = utt
                paragraphs.setdefault(utt.paragraph_id, []).append(utt.utterance_id)
                splits.setdefault(rec["split"], []).append(utt.utterance_id)
        return cls(
            root=root,
            utterances=utterances,
            paragraphs=paragraphs,
            splits=splits,
            vocab=PhonemeVocab.load(root / "vocab.json"),
        )

    def paragraph(self, paragraph_id):
        return [self.utterances[uid] for uid in self.paragraphs[paragraph_id]]

    def __len__(self):
        return len(self.utterances)
