"""Waveform analysis: framing, log-mel extraction, F0 and energy contours.

All frame-rate features share one framing rule: a waveform of n samples
yields ceil(n / hop) frames, frame t centered on sample t*hop (center
padding). This keeps mel rows, F0 and energy values, and phoneme duration
sums interchangeable everywhere downstream.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidConfig, InvalidInput

LOG_FLOOR_DEFAULT = float(np.log(1e-5))


@dataclass(frozen=True)
class AudioConfig:
    sample_rate_hz: int = 16000
    frame_shift_ms: float = 12.0
    frame_length_ms: float = 48.0
    mel_bins: int = 80
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0
    log_floor: float = LOG_FLOOR_DEFAULT
    f0_min_hz: float = 50.0
    f0_max_hz: float = 600.0
    voicing_threshold: float = 0.3

    def __post_init__(self):
        if not (self.frame_length_ms > self.frame_shift_ms > 0):
            raise InvalidConfig("need frame_length_ms > frame_shift_ms > 0")
        if self.mel_bins <= 0:
            raise InvalidConfig("mel_bins must be positive")
        hop = self.sample_rate_hz * self.frame_shift_ms / 1000.0
        if hop != int(hop):
            raise InvalidConfig(
                f"frame shift of {self.frame_shift_ms} ms is not an integer "
                f"number of samples at {self.sample_rate_hz} Hz"
            )
        if not (0 <= self.fmin_hz < self.fmax_hz <= self.sample_rate_hz / 2):
            raise InvalidConfig("need 0 <= fmin_hz < fmax_hz <= Nyquist")
        if not (0 < self.f0_min_hz < self.f0_max_hz):
            raise InvalidConfig("need 0 < f0_min_hz < f0_max_hz")

    @property
    def hop_samples(self) -> int:
        return int(self.sample_rate_hz * self.frame_shift_ms / 1000.0)

    @property
    def win_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.frame_length_ms / 1000.0))

    @property
    def n_fft(self) -> int:
        return 1 << (self.win_samples - 1).bit_length()

    def n_frames(self, n_samples: int) -> int:
        return -(-n_samples // self.hop_samples)


def hann_window(length: int) -> np.ndarray:
    n = np.arange(length, dtype=np.float64)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def _frame_signal(waveform: np.ndarray, cfg: AudioConfig) -> np.ndarray:
    """Slice a center-padded waveform into [n_frames, win_samples]."""
    hop, win = cfg.hop_samples, cfg.win_samples
    n_frames = cfg.n_frames(len(waveform))
    pad = win // 2
    padded = np.concatenate(
        [np.zeros(pad), np.asarray(waveform, dtype=np.float64), np.zeros(pad + hop)]
    )
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


def stft(waveform: np.ndarray, cfg: AudioConfig) -> np.ndarray:
    """Complex STFT, shape [n_frames, n_fft // 2 + 1]."""
    frames = _frame_signal(waveform, cfg) * hann_window(cfg.win_samples)[None, :]
    return np.fft.rfft(frames, n=cfg.n_fft, axis=1)


def istft(spec: np.ndarray, cfg: AudioConfig, length: int) -> np.ndarray:
    """Overlap-add inverse of :func:`stft`, cropped to `length` samples."""
    hop, win = cfg.hop_samples, cfg.win_samples
    window = hann_window(win)
    frames = np.fft.irfft(spec, n=cfg.n_fft, axis=1)[:, :win] * window[None, :]
    n_frames = frames.shape[0]
    total = (n_frames - 1) * hop + win
    out = np.zeros(total)
    wsum = np.zeros(total)
    for t in range(n_frames):
        out[t * hop : t * hop + win] += frames[t]
        wsum[t * hop : t * hop + win] += window**2
    out = np.where(wsum > 1e-10, out / np.maximum(wsum, 1e-10), 0.0)
    pad = win // 2
    return out[pad : pad + length]


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _mel_filterbank(sample_rate_hz, n_fft, mel_bins, fmin_hz, fmax_hz) -> np.ndarray:
    """Triangular mel filterbank, shape [mel_bins, n_fft // 2 + 1]."""
    n_bins = n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * sample_rate_hz / n_fft
    mel_points = np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), mel_bins + 2)
    hz_points = mel_to_hz(mel_points)
    fb = np.zeros((mel_bins, n_bins))
    for m in range(mel_bins):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (fft_freqs - lo) / max(center - lo, 1e-10)
        down = (hi - fft_freqs) / max(hi - center, 1e-10)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_filterbank(cfg: AudioConfig) -> np.ndarray:
    return _mel_filterbank(
        cfg.sample_rate_hz, cfg.n_fft, cfg.mel_bins, cfg.fmin_hz, cfg.fmax_hz
    )


def extract_mel(waveform: np.ndarray, cfg: AudioConfig) -> np.ndarray:
    """Log-mel spectrogram [ceil(n/hop) frames, mel_bins], floored at log_floor."""
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.size == 0:
        raise InvalidInput("empty waveform")
    magnitude = np.abs(stft(waveform, cfg))
    mel_amp = magnitude @ mel_filterbank(cfg).T
    floor_amp = np.exp(cfg.log_floor)
    with np.errstate(divide="ignore"):
        log_mel = np.log(mel_amp)
    mel = np.where(mel_amp > floor_amp, log_mel, cfg.log_floor)
    return mel.astype(np.float32)


def extract_f0(waveform: np.ndarray, cfg: AudioConfig) -> np.ndarray:
    """Per-frame F0 in Hz (0 = unvoiced), same framing as :func:`extract_mel`.

    Normalized autocorrelation with parabolic peak interpolation; a frame is
    voiced when the best peak in [f0_min, f0_max] clears voicing_threshold.
    Among near-tied peaks the smallest lag wins, which suppresses octave
    errors on near-periodic signals.
    """
    waveform = np.asarray(waveform, dtype=np.float64)
    max_lag = int(round(cfg.sample_rate_hz / cfg.f0_min_hz))
    min_lag = max(2, int(cfg.sample_rate_hz / cfg.f0_max_hz))
    if waveform.size < max_lag:
        raise InvalidInput(
            f"waveform too short for F0 analysis: {waveform.size} < {max_lag} samples"
        )
    hop = cfg.hop_samples
    n_frames = cfg.n_frames(len(waveform))
    w = 2 * max_lag
    pad = w // 2
    padded = np.concatenate([np.zeros(pad), waveform, np.zeros(pad + hop)])

    f0 = np.zeros(n_frames, dtype=np.float32)
    for t in range(n_frames):
        x = padded[t * hop : t * hop + w]
        x = x - x.mean()
        energy = np.dot(x, x)
        if energy <= 0.0:
            continue
        spec = np.fft.rfft(x, 2 * w)
        ac = np.fft.irfft(spec * np.conj(spec))[: max_lag + 2]
        cum = np.concatenate([[0.0], np.cumsum(x * x)])
        lags = np.arange(min_lag, max_lag + 1)
        e_head = cum[w - lags]
        e_tail = cum[w] - cum[lags]
        norm = np.sqrt(np.maximum(e_head * e_tail, 1e-20))
        r = ac[lags] / norm
        best = int(np.argmax(r))
        if r[best] < cfg.voicing_threshold:
            continue
        # earliest peak within 3% of the maximum, to avoid halving the pitch
        near = np.flatnonzero(r >= 0.97 * r[best])
        for cand in near:
            if 0 < cand < len(r) - 1 and r[cand] >= r[cand - 1] and r[cand] >= r[cand + 1]:
                best = int(cand)
                break
        lag = float(lags[best])
        if 0 < best < len(r) - 1:
            denom = r[best - 1] - 2.0 * r[best] + r[best + 1]
            if abs(denom) > 1e-12:
                delta = 0.5 * (r[best - 1] - r[best + 1]) / denom
                lag += float(np.clip(delta, -0.5, 0.5))
        f0[t] = cfg.sample_rate_hz / lag
    # despeckle: isolated 1-2 frame voiced islands are almost always
    # chance correlations at signal edges, so a frame stays voiced only
    # when most of its 5-frame neighborhood agrees
    voiced = (f0 > 0).astype(np.float64)
    support = np.convolve(voiced, np.ones(5), mode="same")
    f0[support < 3] = 0.0
    return f0


def frame_energy(mel: np.ndarray) -> np.ndarray:
    """Per-frame energy: L2 norm of each log-mel row."""
    return np.linalg.norm(np.asarray(mel, dtype=np.float64), axis=1).astype(np.float32)


def phoneme_average(
    contour: np.ndarray, durations: np.ndarray, voiced_only: bool = False
) -> np.ndarray:
    """Average a per-frame contour over each phoneme's frame span.

    A zero-duration phoneme averages to 0. With voiced_only, only strictly
    positive frames count (the F0 convention); a span with no voiced frames
    averages to 0.
    """
    contour = np.asarray(contour, dtype=np.float64)
    durations = np.asarray(durations, dtype=np.int64)
    if int(durations.sum()) != len(contour):
        raise InvalidInput(
            f"durations sum to {int(durations.sum())} but contour has {len(contour)} frames"
        )
    out = np.zeros(len(durations), dtype=np.float64)
    start = 0
    for k, dur in enumerate(durations):
        span = contour[start : start + dur]
        if voiced_only:
            span = span[span > 0]
        if span.size:
            out[k] = span.mean()
        start += dur
    return out.astype(np.float32)
