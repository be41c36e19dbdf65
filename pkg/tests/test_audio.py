"""Feature extraction: framing, mel floor, F0 against an FFT-peak oracle."""

import numpy as np
import pytest

from paraspeech.audio import (
    AudioConfig,
    extract_f0,
    extract_mel,
    frame_energy,
    hz_to_mel,
    istft,
    mel_filterbank,
    mel_to_hz,
    phoneme_average,
    stft,
)
from paraspeech.errors import InvalidConfig, InvalidInput


def tone(hz, seconds, rate=16000, amp=0.5):
    return amp * np.sin(2 * np.pi * hz * np.arange(int(seconds * rate)) / rate)


def fft_peak_hz(x, rate):
    """Independent F0 oracle: quadratic-interpolated magnitude-spectrum peak."""
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    k = int(np.argmax(spec))
    a, b, c = np.log(spec[k - 1 : k + 2])
    delta = 0.5 * (a - c) / (a - 2 * b + c)
    return (k + delta) * rate / len(x)


class TestConfig:
    def test_defaults(self, audio_cfg):
        assert audio_cfg.sample_rate_hz == 16000
        assert audio_cfg.hop_samples == 192  # 12 ms
        assert audio_cfg.win_samples == 768  # 48 ms
        assert audio_cfg.n_fft == 1024  # next power of two
        assert audio_cfg.mel_bins == 80
        assert audio_cfg.log_floor == pytest.approx(np.log(1e-5))

    def test_non_integer_hop_rejected(self):
        with pytest.raises(InvalidConfig):
            AudioConfig(sample_rate_hz=22050, frame_shift_ms=12)

    def test_bad_band_rejected(self):
        with pytest.raises(InvalidConfig):
            AudioConfig(fmax_hz=9000)  # above Nyquist
        with pytest.raises(InvalidConfig):
            AudioConfig(f0_min_hz=700, f0_max_hz=600)

    def test_frame_count_is_ceil(self, audio_cfg):
        assert audio_cfg.n_frames(19200) == 100
        assert audio_cfg.n_frames(19201) == 101
        assert audio_cfg.n_frames(1) == 1


class TestStft:
    def test_round_trip(self, audio_cfg, rng):
        x = rng.standard_normal(5000)
        y = istft(stft(x, audio_cfg), audio_cfg, length=len(x))
        np.testing.assert_allclose(y, x, atol=1e-10)

    def test_frame_count(self, audio_cfg, rng):
        assert stft(rng.standard_normal(19200), audio_cfg).shape[0] == 100


class TestMel:
    def test_shape_and_dtype(self, audio_cfg):
        mel = extract_mel(tone(220, 1.2), audio_cfg)
        assert mel.shape == (100, 80)
        assert mel.dtype == np.float32

    def test_silence_is_exactly_log_floor(self, audio_cfg):
        mel = extract_mel(np.zeros(16000), audio_cfg)
        assert mel.shape == (84, 80)
        np.testing.assert_array_equal(mel, np.float32(audio_cfg.log_floor))

    def test_tone_peaks_in_expected_mel_bin(self, audio_cfg):
        """Oracle: recompute the HTK center frequencies inline and check the
        hottest filter for a 1 kHz tone sits at the filter containing 1 kHz."""
        mel = extract_mel(tone(1000, 1.0), audio_cfg)
        hot = int(np.argmax(np.median(mel, axis=0)))
        edges = 2595.0 * np.log10(1.0 + np.array([0.0, 8000.0]) / 700.0)
        centers_mel = np.linspace(edges[0], edges[1], audio_cfg.mel_bins + 2)[1:-1]
        centers_hz = 700.0 * (10.0 ** (centers_mel / 2595.0) - 1.0)
        expected = int(np.argmin(np.abs(centers_hz - 1000.0)))
        assert abs(hot - expected) <= 1

    def test_amplitude_scaling_shifts_log_mel(self, audio_cfg):
        """Doubling amplitude adds exactly ln 2 wherever above the floor."""
        x = tone(330, 1.0, amp=0.25)
        a = extract_mel(x, audio_cfg).astype(np.float64)
        b = extract_mel(2 * x, audio_cfg).astype(np.float64)
        above = a > audio_cfg.log_floor + 1.0
        np.testing.assert_allclose((b - a)[above], np.log(2.0), atol=1e-3)

    def test_filterbank_rows_cover_band(self, audio_cfg):
        fb = mel_filterbank(audio_cfg)
        assert fb.shape == (80, 513)
        assert (fb.sum(axis=1) > 0).all()

    def test_mel_scale_inverts(self):
        hz = np.array([0.0, 440.0, 1000.0, 8000.0])
        np.testing.assert_allclose(mel_to_hz(hz_to_mel(hz)), hz, rtol=1e-12)

    def test_empty_waveform_rejected(self, audio_cfg):
        with pytest.raises(InvalidInput):
            extract_mel(np.zeros(0), audio_cfg)


class TestF0:
    def test_pure_tones_match_fft_oracle(self, audio_cfg):
        for hz in (110.0, 220.0, 330.5, 440.0):
            x = tone(hz, 1.0)
            oracle = fft_peak_hz(x, audio_cfg.sample_rate_hz)
            f0 = extract_f0(x, audio_cfg)
            voiced = f0[f0 > 0]
            assert len(voiced) > 0.9 * len(f0)
            assert np.median(voiced) == pytest.approx(oracle, abs=2.0)

    def test_stated_tolerances(self, audio_cfg):
        f220 = extract_f0(tone(220, 1.0), audio_cfg)
        assert 218 <= np.median(f220[f220 > 0]) <= 222
        f440 = extract_f0(tone(440, 1.0), audio_cfg)
        assert 436 <= np.median(f440[f440 > 0]) <= 444

    def test_silence_unvoiced(self, audio_cfg):
        assert not extract_f0(np.zeros(16000), audio_cfg).any()

    def test_noise_mostly_unvoiced(self, audio_cfg, rng):
        f0 = extract_f0(rng.standard_normal(16000), audio_cfg)
        assert (f0 > 0).mean() < 0.1

    def test_harmonic_rich_tone_no_octave_error(self, audio_cfg):
        """Strong harmonics must not drag the estimate to f0/2 or 2*f0."""
        t = np.arange(16000) / 16000
        x = 0.5 * np.sin(2 * np.pi * 150 * t) + 0.45 * np.sin(2 * np.pi * 300 * t + 1.0)
        f0 = extract_f0(x, audio_cfg)
        assert np.median(f0[f0 > 0]) == pytest.approx(150.0, abs=3.0)

    def test_range_limits_respected(self, audio_cfg):
        f0 = extract_f0(tone(30, 1.0), audio_cfg)  # below search range
        voiced = f0[f0 > 0]
        assert voiced.size == 0 or voiced.min() >= audio_cfg.f0_min_hz

    def test_too_short_rejected(self, audio_cfg):
        with pytest.raises(InvalidInput):
            extract_f0(np.zeros(100), audio_cfg)

    def test_voiced_unvoiced_boundary(self, audio_cfg):
        x = np.concatenate([tone(200, 0.5), np.zeros(8000)])
        f0 = extract_f0(x, audio_cfg)
        assert (f0[5:35] > 0).all()
        assert not f0[-30:].any()


class TestFrameStats:
    def test_energy_is_row_l2_norm(self, rng):
        mel = rng.standard_normal((7, 80)).astype(np.float32)
        np.testing.assert_allclose(
            frame_energy(mel), np.sqrt((mel.astype(np.float64) ** 2).sum(axis=1)), rtol=1e-6
        )

    def test_phoneme_average_plain(self):
        out = phoneme_average(np.array([1.0, 1.0, 3.0, 3.0]), np.array([2, 2]))
        np.testing.assert_array_equal(out, [1.0, 3.0])

    def test_phoneme_average_zero_duration(self):
        out = phoneme_average(np.array([2.0, 2.0, 2.0, 2.0]), np.array([0, 4]))
        np.testing.assert_array_equal(out, [0.0, 2.0])

    def test_phoneme_average_voiced_only(self):
        out = phoneme_average(
            np.array([100.0, 0.0, 0.0, 200.0]), np.array([2, 2]), voiced_only=True
        )
        np.testing.assert_array_equal(out, [100.0, 200.0])

    def test_phoneme_average_all_unvoiced_span(self):
        out = phoneme_average(np.array([0.0, 0.0]), np.array([2]), voiced_only=True)
        np.testing.assert_array_equal(out, [0.0])

    def test_phoneme_average_length_mismatch(self):
        with pytest.raises(InvalidInput):
            phoneme_average(np.ones(3), np.array([2, 2]))
