"""Ingestion: alignment quantization, manifest checks, store round trips."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from paraspeech.audio import AudioConfig
from paraspeech.corpus import (
    FeatureStore,
    Utterance,
    assign_splits,
    durations_from_alignment,
    ingest,
    load_manifest,
)
from paraspeech.errors import AlignmentError, IngestError, InvalidInput
from paraspeech.toydata import make_toy_corpus

SHIFT = 0.012


class TestDurations:
    def test_exact_boundaries(self):
        intervals = [("a", 0.0, 0.048), ("b", 0.048, 0.120)]
        out = durations_from_alignment(intervals, 10, SHIFT)
        np.testing.assert_array_equal(out, [4, 6])

    def test_short_alignment_repaired_on_last_phoneme(self):
        """Durations summing to frames-1 get the missing frame appended."""
        intervals = [("a", 0.0, 0.048), ("b", 0.048, 0.108)]  # 4 + 5 = 9 frames
        out = durations_from_alignment(intervals, 10, SHIFT)
        np.testing.assert_array_equal(out, [4, 6])
        assert out.sum() == 10

    def test_long_alignment_truncated(self):
        intervals = [("a", 0.0, 0.048), ("b", 0.048, 0.144)]  # 4 + 8 = 12 frames
        out = durations_from_alignment(intervals, 10, SHIFT)
        np.testing.assert_array_equal(out, [4, 6])

    def test_cumulative_rounding_does_not_drift(self):
        """200 phonemes of 1.5 frames each: per-phoneme rounding would drift
        by ~100 frames; cumulative rounding stays within half a frame."""
        n, step = 200, 0.018  # 1.5 frames
        intervals = [("p", i * step, (i + 1) * step) for i in range(n)]
        total = int(round(n * step / SHIFT))
        out = durations_from_alignment(intervals, total, SHIFT)
        assert out.sum() == total
        assert set(out.tolist()) <= {1, 2}
        cum = np.cumsum(out)
        ideal = (np.arange(1, n + 1) * step) / SHIFT
        assert np.max(np.abs(cum - ideal)) <= 0.5 + 1e-9

    def test_empty_alignment_rejected(self):
        with pytest.raises(AlignmentError):
            durations_from_alignment([], 10, SHIFT, "u")

    def test_non_monotone_rejected(self):
        with pytest.raises(AlignmentError):
            durations_from_alignment([("a", 0, 0.1), ("b", 0.1, 0.05)], 10, SHIFT, "u")

    def test_zero_duration_phoneme_allowed(self):
        intervals = [("a", 0.0, 0.048), ("b", 0.048, 0.050), ("c", 0.050, 0.120)]
        out = durations_from_alignment(intervals, 10, SHIFT)
        np.testing.assert_array_equal(out, [4, 0, 6])


class TestManifest:
    def _write(self, tmp_path, rows):
        p = tmp_path / "m.jsonl"
        p.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        return p

    def _row(self, uid, pid, idx):
        return {
            "utterance_id": uid, "paragraph_id": pid, "index": idx,
            "text": "x", "audio_path": "a.wav", "alignment_path": "a.txt",
        }

    def test_duplicate_ids_rejected(self, tmp_path):
        p = self._write(tmp_path, [self._row("u", "p", 0), self._row("u", "p", 1)])
        with pytest.raises(InvalidInput):
            load_manifest(p)

    def test_gap_in_paragraph_order_rejected(self, tmp_path):
        p = self._write(tmp_path, [self._row("u0", "p", 0), self._row("u2", "p", 2)])
        with pytest.raises(InvalidInput):
            load_manifest(p)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(IngestError):
            load_manifest(tmp_path / "nope.jsonl")


class TestSplits:
    def test_deterministic(self):
        ids = [f"u{i}" for i in range(40)]
        assert assign_splits(ids, 3) == assign_splits(ids, 3)
        assert assign_splits(ids, 3) != assign_splits(ids, 4)

    def test_fractions(self):
        split = assign_splits([f"u{i}" for i in range(100)], 0, 0.1, 0.2)
        counts = {s: list(split.values()).count(s) for s in ("train", "valid", "test")}
        assert counts == {"train": 70, "valid": 10, "test": 20}


class TestIngest:
    def test_store_round_trip(self, toy_store):
        reloaded = FeatureStore.load(toy_store.root)
        assert set(reloaded.utterances) == set(toy_store.utterances)
        for uid, utt in toy_store.utterances.items():
            back = reloaded.utterances[uid]
            np.testing.assert_array_equal(back.mel, utt.mel)
            np.testing.assert_array_equal(back.durations, utt.durations)
            assert back.phonemes == utt.phonemes
            assert back.paragraph_id == utt.paragraph_id

    def test_invariants_hold(self, toy_store):
        for utt in toy_store.utterances.values():
            utt.validate()
            assert utt.durations.sum() == utt.n_frames == len(utt.f0) == len(utt.energy)
            assert len(utt.phonemes) == len(utt.durations)

    def test_paragraph_order(self, toy_store):
        for pid, uids in toy_store.paragraphs.items():
            idx = [toy_store.utterances[u].index_in_paragraph for u in uids]
            assert idx == list(range(len(uids)))

    def test_reingest_is_byte_identical(self, toy_corpus_dir, audio_cfg, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        ingest(toy_corpus_dir / "manifest.jsonl", audio_cfg, a, seed=7)
        ingest(toy_corpus_dir / "manifest.jsonl", audio_cfg, b, seed=7)

        def digest(root):
            return {
                p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(Path(root).rglob("*")) if p.is_file()
            }

        assert digest(a) == digest(b)

    def test_vowels_voiced_consonants_quieter(self, toy_store):
        """Sanity of the toy corpus itself: vowel spans carry pitch."""
        vowels = {"aa", "ee", "ii", "oo", "uu"}
        hits = total = 0
        for utt in toy_store.utterances.values():
            for ph, pitch in zip(utt.phonemes, utt.pitch_ph):
                if ph in vowels:
                    total += 1
                    hits += pitch > 100
        assert hits / total > 0.95

    def test_workers_match_serial(self, toy_corpus_dir, audio_cfg, tmp_path):
        a = ingest(toy_corpus_dir / "manifest.jsonl", audio_cfg, tmp_path / "s", seed=1)
        b = ingest(
            toy_corpus_dir / "manifest.jsonl", audio_cfg, tmp_path / "w", seed=1, workers=4
        )
        for uid in a.utterances:
            np.testing.assert_array_equal(a.utterances[uid].mel, b.utterances[uid].mel)


class TestUtteranceValidation:
    def _utt(self, **kw):
        base = dict(
            utterance_id="u", paragraph_id="p", index_in_paragraph=0, text="t",
            phonemes=["a", "b"], durations=np.array([2, 3]),
            f0=np.zeros(5, np.float32), energy=np.zeros(5, np.float32),
            mel=np.zeros((5, 8), np.float32),
        )
        base.update(kw)
        return Utterance(**base)

    def test_valid(self):
        self._utt().validate()

    def test_duration_sum_mismatch(self):
        with pytest.raises(AlignmentError):
            self._utt(durations=np.array([2, 2])).validate()

    def test_phoneme_count_mismatch(self):
        with pytest.raises(AlignmentError):
            self._utt(phonemes=["a"]).validate()

    def test_f0_out_of_range(self):
        bad = np.zeros(5, np.float32)
        bad[0] = 1200.0
        with pytest.raises(AlignmentError):
            self._utt(f0=bad).validate()

    def test_skeleton_has_no_frames(self):
        sk = Utterance.skeleton("u", "hi", ["h", "i"], mel_bins=8)
        sk.validate()
        assert sk.n_frames == 0
        assert sk.durations.tolist() == [0, 0]
