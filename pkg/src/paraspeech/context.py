"""Context assembly: windows over paragraphs, masked concatenation, pairs.

A training example concatenates the nearest neighbors' phonemes and mels
around the current sentence (``prev ‖ current ‖ next``), flags the current
sentence's frames for masking, and derives the sentence pairs whose
embeddings condition the model.  Semantic context width L and acoustic
context width are independent: text pairs span L sentences per side, the
mel/phoneme concatenation spans ``acoustic_context`` (default 1).
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import Utterance
from .errors import InvalidInput

# segment ids on the concatenated phoneme axis
PREV, CUR, NEXT = 0, 1, 2

# mask policy: the whole current sentence (the training condition), or an
# explicit list of (start, end) frame spans relative to the current sentence
# (the speech-editing condition)
CURRENT_SENTENCE = "current_sentence"

MASK_SENTINEL = 0.0
FRAME_CAP = 3000


@dataclass
class ContextWindow:
    current: Utterance
    preceding: list  # ≤L utterances, nearest last
    following: list  # ≤L utterances, nearest first
    L: int

    def validate(self):
        if self.L < 1:
            raise InvalidInput("context width L must be >= 1")
        if len(self.preceding) > self.L or len(self.following) > self.L:
            raise InvalidInput("more neighbors than context width L")
        span = self.preceding + [self.current] + self.following
        first = self.current.index_in_paragraph - len(self.preceding)
        for off, utt in enumerate(span):
            if utt.paragraph_id != self.current.paragraph_id:
                raise InvalidInput("window crosses a paragraph boundary")
            if utt.index_in_paragraph != first + off:
                raise InvalidInput("window indices are not consecutive")
        return self


@dataclass
class SentencePair:
    text_a: str
    text_b: str
    pair_index: int  # position in [0, 2L)


@dataclass
class TrainingExample:
    utterance_id: str
    phoneme_ids: np.ndarray  # int64 [P], prev ‖ current ‖ next
    segment_ids: np.ndarray  # int64 [P], PREV/CUR/NEXT per phoneme
    durations: np.ndarray  # int64 [P], target frames per phoneme
    pitch_ph: np.ndarray  # float32 [P]
    energy_ph: np.ndarray  # float32 [P]
    concat_mel: np.ndarray  # float32 [T, mel], masked rows carry the sentinel
    mel_target: np.ndarray  # float32 [T, mel], ground truth (loss targets only)
    mask_flags: np.ndarray  # bool [T]
    current_phoneme_span: tuple  # [start, end) on the phoneme axis
    current_frame_span: tuple  # [start, end) on the frame axis
    pairs: list = field(default_factory=list)  # 2L SentencePairs

    @property
    def n_frames(self) -> int:
        return self.concat_mel.shape[0]

    @property
    def n_phonemes(self) -> int:
        return len(self.phoneme_ids)

    def validate(self):
        P, T = self.n_phonemes, self.n_frames
        if not (
            len(self.segment_ids) == len(self.durations) == len(self.pitch_ph)
            == len(self.energy_ph) == P
        ):
            raise InvalidInput("phoneme-axis arrays disagree on length")
        if int(self.durations.sum()) != T or len(self.mask_flags) != T:
            raise InvalidInput("frame-axis arrays disagree with durations")
        if self.mel_target.shape != self.concat_mel.shape:
            raise InvalidInput("mel_target and concat_mel shapes differ")
        ps, pe = self.current_phoneme_span
        fs, fe = self.current_frame_span
        if not (0 <= ps <= pe <= P and 0 <= fs <= fe <= T):
            raise InvalidInput("current spans out of bounds")
        if int(self.durations[ps:pe].sum()) != fe - fs:
            raise InvalidInput("current spans inconsistent with durations")
        if self.mask_flags[:fs].any() or self.mask_flags[fe:].any():
            raise InvalidInput("mask flags outside the current sentence")
        return self


def build_window(paragraph, index: int, L: int) -> ContextWindow:
    """Window of up to L neighbors each side of paragraph[index]."""
    if not 0 <= index < len(paragraph):
        raise InvalidInput(f"index {index} out of range for paragraph of {len(paragraph)}")
    return ContextWindow(
        current=paragraph[index],
        preceding=list(paragraph[max(0, index - L) : index]),
        following=list(paragraph[index + 1 : index + 1 + L]),
        L=L,
    ).validate()


def derive_pairs(window: ContextWindow) -> list:
    """The 2L adjacent sentence pairs over the (2L+1)-sentence span.

    Absent neighbors at paragraph edges contribute empty text, so the pair
    count is always exactly 2L and pair_index k always names the same slot.
    """
    L = window.L
    texts = [""] * (L - len(window.preceding))
    texts += [u.text for u in window.preceding]
    texts.append(window.current.text)
    texts += [u.text for u in window.following]
    texts += [""] * (L - len(window.following))
    return [SentencePair(texts[k], texts[k + 1], k) for k in range(2 * L)]


def _capped_slots(window: ContextWindow, acoustic_context: int, frame_cap: int):
    """Pick the acoustic segments and enforce the per-example frame cap.

    Over the cap, the following segment is dropped first, then the preceding
    segment is truncated from its left edge a whole phoneme at a time (frames
    follow their phoneme, so duration arithmetic stays exact).  The current
    sentence is never cut.
    """
    prev = window.preceding[-acoustic_context:] if acoustic_context else []
    nxt = window.following[:acoustic_context] if acoustic_context else []
    cur = window.current

    def frames(utts):
        return sum(u.n_frames for u in utts)

    prev_skip = [0] * len(prev)  # leading phonemes to drop per prev utterance
    if frames(prev) + cur.n_frames + frames(nxt) > frame_cap:
        nxt = []
    total = frames(prev) + cur.n_frames
    i = 0
    while total > frame_cap and i < len(prev):
        utt = prev[i]
        for k in range(len(utt.phonemes)):
            d = int(utt.durations[k])
            prev_skip[i] += 1
            total -= d
            if total <= frame_cap:
                break
        if prev_skip[i] == len(utt.phonemes):
            i += 1
    return prev, prev_skip, cur, nxt


def assemble_example(
    window: ContextWindow,
    vocab,
    mask_policy=CURRENT_SENTENCE,
    acoustic_context: int = 1,
    frame_cap: int = FRAME_CAP,
) -> TrainingExample:
    """Concatenate phonemes/features around the current sentence and mask it.

    mask_policy is either CURRENT_SENTENCE (flag every current-sentence
    frame) or a list of (start, end) frame spans relative to the current
    sentence (speech editing).  Flagged rows of the returned concat_mel hold
    a sentinel; the ground truth stays only in mel_target.
    """
    window.validate()
    prev, prev_skip, cur, nxt = _capped_slots(window, acoustic_context, frame_cap)

    slots = []
    for utt, skip in zip(prev, prev_skip):
        slots.append((utt, PREV, skip))
    slots.append((cur, CUR, 0))
    for utt in nxt:
        slots.append((utt, NEXT, 0))

    ids, segs, durs, pitch, energy, mels = [], [], [], [], [], []
    cur_ph_start = cur_fr_start = None
    ph_pos = fr_pos = 0
    for utt, seg, skip in slots:
        keep = slice(skip, None)
        n_ph = len(utt.phonemes) - skip
        n_fr = int(utt.durations[keep].sum())
        if seg == CUR:
            cur_ph_start, cur_fr_start = ph_pos, fr_pos
        ids.append(vocab.encode(utt.phonemes[skip:]))
        segs.append(np.full(n_ph, seg, dtype=np.int64))
        durs.append(utt.durations[keep].astype(np.int64))
        pitch.append(utt.pitch_ph[keep])
        energy.append(utt.energy_ph[keep])
        start_frame = int(utt.durations[:skip].sum())
        mels.append(utt.mel[start_frame:])
        ph_pos += n_ph
        fr_pos += n_fr

    mel_target = (
        np.concatenate(mels, axis=0)
        if mels
        else np.zeros((0, cur.mel.shape[1]), np.float32)
    )
    total_frames = mel_target.shape[0]
    cur_fr_end = cur_fr_start + cur.n_frames
    cur_ph_end = cur_ph_start + len(cur.phonemes)

    mask_flags = np.zeros(total_frames, dtype=bool)
    if isinstance(mask_policy, str):
        if mask_policy != CURRENT_SENTENCE:
            raise InvalidInput(f"unknown mask policy {mask_policy!r}")
        mask_flags[cur_fr_start:cur_fr_end] = True
    else:
        for start, end in mask_policy:
            if not 0 <= start <= end <= cur.n_frames:
                raise InvalidInput(
                    f"mask span [{start},{end}) outside current sentence "
                    f"of {cur.n_frames} frames"
                )
            mask_flags[cur_fr_start + start : cur_fr_start + end] = True

    concat_mel = mel_target.copy()
    concat_mel[mask_flags] = MASK_SENTINEL

    return TrainingExample(
        utterance_id=cur.utterance_id,
        phoneme_ids=np.concatenate(ids),
        segment_ids=np.concatenate(segs),
        durations=np.concatenate(durs),
        pitch_ph=np.concatenate(pitch).astype(np.float32),
        energy_ph=np.concatenate(energy).astype(np.float32),
        concat_mel=concat_mel.astype(np.float32),
        mel_target=mel_target.astype(np.float32),
        mask_flags=mask_flags,
        current_phoneme_span=(cur_ph_start, cur_ph_end),
        current_frame_span=(cur_fr_start, cur_fr_end),
        pairs=derive_pairs(window),
    ).validate()
