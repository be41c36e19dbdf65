"""Inference orchestration: four synthesis modes plus a classical vocoder.

Modes differ only in which neighbor speech is attached to the phoneme/mel
concatenation; neighbor *text* always conditions the model (through the
sentence-pair embeddings, and through neighbor phonemes for the speech-aware
modes).  The current sentence is always generated from MASK frames whose
count comes from the predicted durations.

- FULL_CONTEXT: previous and following mels attached.
- PREV_SPEECH_ONLY (default): previous mel only; following speech empty.
- TEXT_ONLY: no speech context at all; the masked input is MASK embeddings
  only and conditioning is purely textual.
- EDIT: regenerate a phoneme span of an existing utterance; everything
  outside the edited frames is the original signal, spliced back in.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.io import wavfile

from . import audio
from .context import ContextWindow, assemble_example
from .corpus import F0_SANITY_RANGE, Utterance
from .errors import EditError, InvalidInput, InvalidRequest
from .model import INFER
from .semantic import embed_pairs

FULL_CONTEXT = "full_context"
PREV_SPEECH_ONLY = "prev_speech_only"
TEXT_ONLY = "text_only"
EDIT = "edit"
MODES = (FULL_CONTEXT, PREV_SPEECH_ONLY, TEXT_ONLY, EDIT)


@dataclass
class SynthesisRequest:
    texts: list = None  # paragraph sentences, in reading order
    current_index: int = 0
    mode: str = PREV_SPEECH_ONLY
    prev_utterance: Utterance = None  # cached features for texts[current_index-1]
    next_utterance: Utterance = None  # cached features for texts[current_index+1]
    semantic_context_l: int = 2
    # EDIT only
    base: Utterance = None
    edit_phoneme_span: tuple = None  # [start, end) on base.phonemes
    replacement_text: str = ""

    def validate(self):
        if self.mode not in MODES:
            raise InvalidRequest(f"unknown mode {self.mode!r}")
        if self.semantic_context_l < 1:
            raise InvalidRequest("semantic_context_l must be >= 1")
        if self.mode == EDIT:
            if self.base is None or self.edit_phoneme_span is None:
                raise InvalidRequest("EDIT requires a base utterance and a phoneme span")
            start, end = self.edit_phoneme_span
            if not 0 <= start <= end <= len(self.base.phonemes):
                raise EditError(
                    f"span [{start},{end}) outside base utterance "
                    f"of {len(self.base.phonemes)} phonemes"
                )
            return self
        if not self.texts or not (0 <= self.current_index < len(self.texts)):
            raise InvalidRequest("texts and a valid current_index are required")
        if not self.texts[self.current_index].strip():
            raise InvalidRequest("current sentence text is empty")
        idx, last = self.current_index, len(self.texts) - 1
        if self.mode in (FULL_CONTEXT, PREV_SPEECH_ONLY) and idx > 0 and self.prev_utterance is None:
            raise InvalidRequest(f"{self.mode} requires previous-sentence speech")
        if self.mode == FULL_CONTEXT and idx < last and self.next_utterance is None:
            raise InvalidRequest("full_context requires following-sentence speech")
        return self


@dataclass
class SynthesisResult:
    utterance_id: str
    mel: np.ndarray  # float32; current sentence (synthesize) or whole utterance (edit)
    durations: np.ndarray  # int64, frames per phoneme of `phonemes`
    phonemes: list
    cache: Utterance  # feeds the next sentence's acoustic context
    pairs: list = field(default_factory=list)


def _sanitize_f0(f0: np.ndarray) -> np.ndarray:
    lo, hi = F0_SANITY_RANGE
    f0 = np.asarray(f0, dtype=np.float32).copy()
    f0[(f0 < lo) | (f0 > hi)] = 0.0
    return f0


def _predicted_raw(log1p_pred: torch.Tensor) -> np.ndarray:
    """Back to the raw Hz / energy domain (mirrors the variance adaptor)."""
    return np.expm1(np.clip(log1p_pred.detach().cpu().numpy(), 0.0, 12.0)).astype(np.float32)


class Synthesizer:
    def __init__(self, model, embedder, lexicon, vocab, audio_cfg=None):
        self.model = model.eval()
        self.embedder = embedder
        self.lexicon = lexicon
        self.vocab = vocab
        self.audio_cfg = audio_cfg or audio.AudioConfig()

    @property
    def _mel_bins(self) -> int:
        return self.model.cfg.mel_bins

    def _skeleton(self, text, paragraph_id, index, uid=None):
        return Utterance.skeleton(
            uid or f"{paragraph_id}_s{index:02d}",
            text,
            self.lexicon.phonemize_sentence(text),
            self._mel_bins,
            paragraph_id=paragraph_id,
            index=index,
        )

    def utterance_from_audio(
        self, text, waveform, utterance_id="ctx", paragraph_id="", index=0
    ) -> Utterance:
        """Context features from raw reference audio.

        Without an aligner at inference time, per-phoneme durations are
        allocated uniformly (remainder frames go to the earliest phonemes);
        the mel rows themselves stay exact, so the acoustic context is
        faithful even though the phoneme boundaries are approximate.
        """
        cfg = self.audio_cfg
        if cfg.mel_bins != self._mel_bins:
            raise InvalidInput(
                f"audio config has {cfg.mel_bins} mel bins but the model expects "
                f"{self._mel_bins}"
            )
        phonemes = self.lexicon.phonemize_sentence(text)
        if not phonemes:
            raise InvalidRequest("context text has no phonemes")
        mel = audio.extract_mel(waveform, cfg)
        f0 = _sanitize_f0(audio.extract_f0(waveform, cfg))
        energy = audio.frame_energy(mel)
        base, rem = divmod(mel.shape[0], len(phonemes))
        durations = np.full(len(phonemes), base, dtype=np.int64)
        durations[:rem] += 1
        return Utterance(
            utterance_id=utterance_id,
            paragraph_id=paragraph_id,
            index_in_paragraph=index,
            text=text,
            phonemes=phonemes,
            durations=durations,
            f0=f0,
            energy=energy,
            mel=mel,
            pitch_ph=audio.phoneme_average(f0, durations, voiced_only=True),
            energy_ph=audio.phoneme_average(energy, durations),
        ).validate()

    def _window(self, request: SynthesisRequest) -> ContextWindow:
        """Window over the request texts; neighbor slots carry real features
        only where the mode attaches speech, zero-frame skeletons elsewhere."""
        idx, L = request.current_index, request.semantic_context_l
        pid = "synth"

        def slot(j, provided):
            if provided is not None:
                return dataclasses.replace(
                    provided, paragraph_id=pid, index_in_paragraph=j, text=request.texts[j]
                )
            return self._skeleton(request.texts[j], pid, j)

        use_prev = request.mode in (FULL_CONTEXT, PREV_SPEECH_ONLY)
        use_next = request.mode == FULL_CONTEXT
        preceding = [
            slot(j, request.prev_utterance if (use_prev and j == idx - 1) else None)
            for j in range(max(0, idx - L), idx)
        ]
        following = [
            slot(j, request.next_utterance if (use_next and j == idx + 1) else None)
            for j in range(idx + 1, min(len(request.texts), idx + 1 + L))
        ]
        return ContextWindow(
            current=self._skeleton(request.texts[idx], pid, idx),
            preceding=preceding,
            following=following,
            L=L,
        ).validate()

    def _run(self, example, predict_duration_mask=None):
        pbes = embed_pairs(example.pairs, self.embedder)
        with torch.no_grad():
            return self.model(
                example, pbes, mode=INFER, predict_duration_mask=predict_duration_mask
            )

    def synthesize(self, request: SynthesisRequest) -> SynthesisResult:
        """Generate the current sentence's mel from text plus mode-dependent
        neighbor speech; returns only the current-sentence slice."""
        request.validate()
        if request.mode == EDIT:
            return self.edit(request)
        window = self._window(request)
        example = assemble_example(
            window,
            self.vocab,
            acoustic_context=0 if request.mode == TEXT_ONLY else 1,
        )
        outputs = self._run(example)

        ps, pe = example.current_phoneme_span
        fs, fe = outputs.current_frame_span
        mel = outputs.mel_after[fs:fe].detach().cpu().numpy().astype(np.float32)
        durations = outputs.durations_used[ps:pe].detach().cpu().numpy().astype(np.int64)
        pitch_raw = _sanitize_f0(_predicted_raw(outputs.pitch_pred[ps:pe]))

        energy = audio.frame_energy(mel)
        cache = Utterance(
            utterance_id=window.current.utterance_id,
            paragraph_id=window.current.paragraph_id,
            index_in_paragraph=window.current.index_in_paragraph,
            text=window.current.text,
            phonemes=window.current.phonemes,
            durations=durations,
            f0=np.repeat(pitch_raw, durations),
            energy=energy,
            mel=mel,
            pitch_ph=pitch_raw,
            energy_ph=audio.phoneme_average(energy, durations),
        ).validate()
        return SynthesisResult(
            utterance_id=cache.utterance_id,
            mel=mel,
            durations=durations,
            phonemes=list(window.current.phonemes),
            cache=cache,
            pairs=example.pairs,
        )

    def read_paragraph(self, texts, mode=PREV_SPEECH_ONLY, semantic_context_l=2):
        """Synthesize a paragraph in order, each sentence hearing the one
        just generated (sequential consistency)."""
        if mode not in (PREV_SPEECH_ONLY, TEXT_ONLY):
            raise InvalidRequest("sequential reading supports prev_speech_only or text_only")
        results, prev = [], None
        for k in range(len(texts)):
            result = self.synthesize(SynthesisRequest(
                texts=list(texts),
                current_index=k,
                mode=mode,
                prev_utterance=prev,
                semantic_context_l=semantic_context_l,
            ))
            results.append(result)
            prev = result.cache
        return results

    def edit(self, request: SynthesisRequest) -> SynthesisResult:
        """Regenerate a phoneme span of an existing utterance.

        Kept phonemes keep their original durations and (unmasked) audio;
        the replacement span gets predicted durations and MASK frames.  The
        model's prediction is spliced into the original signal: outside the
        edited frames the output is the original mel bit-exactly, except
        within the PostNet receptive field of the seams, where the refined
        signal is kept so the transition stays smooth.
        """
        request.validate()
        base = request.base
        a, b = request.edit_phoneme_span
        repl = self.lexicon.phonemize_words(request.replacement_text)
        if a == b and not repl:
            return SynthesisResult(
                utterance_id=base.utterance_id,
                mel=base.mel.copy(),
                durations=base.durations.copy(),
                phonemes=list(base.phonemes),
                cache=base,
            )

        fa = int(base.durations[:a].sum())
        fb = int(base.durations[:b].sum())
        edited = Utterance(
            utterance_id=f"{base.utterance_id}~edit",
            paragraph_id=base.paragraph_id,
            index_in_paragraph=base.index_in_paragraph,
            text=base.text,
            phonemes=list(base.phonemes[:a]) + repl + list(base.phonemes[b:]),
            durations=np.concatenate([
                base.durations[:a],
                np.zeros(len(repl), dtype=np.int64),
                base.durations[b:],
            ]),
            f0=np.concatenate([base.f0[:fa], base.f0[fb:]]),
            energy=np.concatenate([base.energy[:fa], base.energy[fb:]]),
            mel=np.concatenate([base.mel[:fa], base.mel[fb:]], axis=0),
            pitch_ph=np.concatenate([
                base.pitch_ph[:a], np.zeros(len(repl), np.float32), base.pitch_ph[b:],
            ]),
            energy_ph=np.concatenate([
                base.energy_ph[:a], np.zeros(len(repl), np.float32), base.energy_ph[b:],
            ]),
        ).validate()

        window = ContextWindow(
            current=edited, preceding=[], following=[], L=request.semantic_context_l
        ).validate()
        example = assemble_example(window, self.vocab, mask_policy=[])
        predict_mask = np.zeros(example.n_phonemes, dtype=bool)
        predict_mask[a : a + len(repl)] = True
        outputs = self._run(example, predict_duration_mask=predict_mask)

        durations = outputs.durations_used.detach().cpu().numpy().astype(np.int64)
        span_frames = int(durations[a : a + len(repl)].sum())
        es, ee = fa, fa + span_frames
        total = int(durations.sum())

        reference = torch.zeros(total, self._mel_bins, dtype=outputs.mel_before.dtype)
        reference[:es] = torch.as_tensor(base.mel[:fa], dtype=reference.dtype)
        reference[ee:] = torch.as_tensor(base.mel[fb:], dtype=reference.dtype)
        spliced, refined = self.model.splice_and_refine(outputs.mel_before, reference, (es, ee))

        cfg = self.model.cfg
        radius = cfg.postnet_layers * (cfg.postnet_kernel // 2)
        final = reference.clone()
        lo, hi = max(0, es - radius), min(total, ee + radius)
        final[lo:hi] = refined[lo:hi]
        mel = final.detach().cpu().numpy().astype(np.float32)

        pitch_repl = _sanitize_f0(_predicted_raw(outputs.pitch_pred[a : a + len(repl)]))
        energy = audio.frame_energy(mel)
        cache = Utterance(
            utterance_id=edited.utterance_id,
            paragraph_id=edited.paragraph_id,
            index_in_paragraph=edited.index_in_paragraph,
            text=edited.text,
            phonemes=edited.phonemes,
            durations=durations,
            f0=np.concatenate([
                base.f0[:fa],
                np.repeat(pitch_repl, durations[a : a + len(repl)]),
                base.f0[fb:],
            ]),
            energy=energy,
            mel=mel,
            pitch_ph=np.concatenate([base.pitch_ph[:a], pitch_repl, base.pitch_ph[b:]]),
            energy_ph=audio.phoneme_average(energy, durations),
        ).validate()
        return SynthesisResult(
            utterance_id=cache.utterance_id,
            mel=mel,
            durations=durations,
            phonemes=list(edited.phonemes),
            cache=cache,
            pairs=example.pairs,
        )


def mel_to_wave(mel, cfg: audio.AudioConfig = None, iters: int = 60, seed: int = 0):
    """Waveform from a log-mel spectrogram by iterative phase reconstruction
    over the pseudo-inverted filter bank (a classical stand-in for a neural
    vocoder).  Deterministic given iters and seed."""
    cfg = cfg or audio.AudioConfig()
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2 or mel.shape[1] != cfg.mel_bins:
        raise InvalidInput(f"expected [frames, {cfg.mel_bins}] mel, got {mel.shape}")
    if not np.isfinite(mel).all():
        raise InvalidInput("mel contains non-finite values")

    if mel.shape[0] == 0:
        return np.zeros(0)
    fb = audio.mel_filterbank(cfg)
    magnitude = np.clip(np.exp(mel) @ np.linalg.pinv(fb).T, 0.0, None)
    length = mel.shape[0] * cfg.hop_samples
    rng = np.random.default_rng(seed)
    phase = rng.uniform(-np.pi, np.pi, magnitude.shape)
    spec = magnitude * np.exp(1j * phase)
    for _ in range(max(0, iters)):
        wave = audio.istft(spec, cfg, length)
        spec = magnitude * np.exp(1j * np.angle(audio.stft(wave, cfg)))
    wave = audio.istft(spec, cfg, length)
    peak = np.abs(wave).max()
    if peak > 0.99:
        wave = wave * (0.99 / peak)
    return wave


def write_wav(path, waveform, cfg: audio.AudioConfig = None):
    """16-bit PCM output at the analysis sample rate."""
    cfg = cfg or audio.AudioConfig()
    samples = np.clip(np.asarray(waveform) * 32767.0, -32768, 32767).astype(np.int16)
    wavfile.write(path, cfg.sample_rate_hz, samples)
