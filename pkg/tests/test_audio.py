"""WAV parsing, resampling, amplitude normalization, and windowing."""

import struct

import numpy as np
import pytest

from angernet.audio import (
    AudioClip,
    WindowSpec,
    extract_windows,
    normalize_and_scale,
    normalize_dbfs,
    random_segment,
    read_wav,
    read_wav_file,
    resample,
    write_wav,
)
from angernet.errors import AudioFormatError, ClipTooShortError, ConfigError

from conftest import dominant_frequency, make_tone


def _wav_bytes(payload: bytes, *, channels=1, rate=16000, bits=16, fmt=1) -> bytes:
    header = b"fmt " + struct.pack(
        "<IHHIIHH", 16, fmt, channels, rate,
        rate * channels * bits // 8, channels * bits // 8, bits,
    )
    data = b"data" + struct.pack("<I", len(payload)) + payload
    body = b"WAVE" + header + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


class TestReadWav:
    def test_pcm16_full_scale(self):
        clip = read_wav(_wav_bytes(struct.pack("<3h", 32767, -32768, 0)))
        np.testing.assert_allclose(clip.samples, [32767 / 32768, -1.0, 0.0], atol=1e-7)
        assert clip.sample_rate == 16000

    def test_stereo_averaged_to_mono(self):
        payload = struct.pack("<4h", 16384, -16384, 8192, 8192)  # L,R,L,R
        clip = read_wav(_wav_bytes(payload, channels=2))
        np.testing.assert_allclose(clip.samples, [0.0, 0.25], atol=1e-6)

    def test_pcm24(self):
        full = 2**23 - 1
        payload = full.to_bytes(3, "little") + (-(2**23)).to_bytes(3, "little", signed=True)
        clip = read_wav(_wav_bytes(payload, bits=24))
        np.testing.assert_allclose(clip.samples, [full / 2**23, -1.0], atol=1e-6)

    def test_pcm32_and_float32(self):
        payload = struct.pack("<2i", 2**31 - 1, -(2**31))
        clip = read_wav(_wav_bytes(payload, bits=32))
        np.testing.assert_allclose(clip.samples, [(2**31 - 1) / 2**31, -1.0], atol=1e-7)
        fpayload = struct.pack("<2f", 0.5, -0.25)
        fclip = read_wav(_wav_bytes(fpayload, bits=32, fmt=3))
        np.testing.assert_allclose(fclip.samples, [0.5, -0.25])

    def test_chunk_length_exceeding_file_truncation_error(self):
        blob = _wav_bytes(struct.pack("<4h", 1, 2, 3, 4))
        clipped = blob[:-4]  # data chunk now claims more than remains
        with pytest.raises(AudioFormatError, match="truncated"):
            read_wav(clipped)

    def test_not_riff(self):
        with pytest.raises(AudioFormatError, match="RIFF"):
            read_wav(b"\x00" * 64)

    def test_unsupported_codec(self):
        with pytest.raises(AudioFormatError, match="codec"):
            read_wav(_wav_bytes(b"\x00\x00", fmt=7))

    def test_missing_data_chunk(self):
        body = b"WAVE" + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 16000, 32000, 2, 16)
        blob = b"RIFF" + struct.pack("<I", len(body)) + body
        with pytest.raises(AudioFormatError, match="data"):
            read_wav(blob)

    def test_extensible_wrapper(self):
        # WAVE_FORMAT_EXTENSIBLE with the PCM sub-format tag leading the GUID
        fmt_body = struct.pack("<HHIIHH", 0xFFFE, 1, 16000, 32000, 2, 16)
        fmt_body += struct.pack("<HHI", 22, 16, 0) + struct.pack("<H", 1) + b"\x00" * 14
        data = struct.pack("<2h", 100, -100)
        body = (
            b"WAVE"
            + b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
            + b"data" + struct.pack("<I", len(data)) + data
        )
        blob = b"RIFF" + struct.pack("<I", len(body)) + body
        clip = read_wav(blob)
        assert len(clip.samples) == 2

    def test_write_read_roundtrip(self, tmp_path):
        samples = make_tone(440.0, duration_s=0.25)
        path = tmp_path / "tone.wav"
        write_wav(path, samples, 16000)
        clip = read_wav_file(path)
        assert clip.sample_rate == 16000
        np.testing.assert_allclose(clip.samples, samples, atol=1.0 / 32768)


class TestResample:
    def test_equal_rate_bitwise_passthrough(self):
        clip = AudioClip(make_tone(440.0), 16000)
        out = resample(clip, 16000)
        assert out.samples is clip.samples

    def test_tone_frequency_preserved_from_22050(self):
        clip = AudioClip(make_tone(1000.0, duration_s=1.0, sample_rate=22050), 22050)
        out = resample(clip, 16000)
        freq = dominant_frequency(out.samples, 16000)
        assert abs(freq - 1000.0) / 1000.0 < 0.005

    def test_upsample_length(self):
        clip = AudioClip(make_tone(440.0, duration_s=1.0, sample_rate=8000), 8000)
        out = resample(clip, 16000)
        assert abs(len(out.samples) - 16000) <= 1

    @pytest.mark.parametrize("source,target", [(44100, 16000), (22050, 16000), (8000, 16000)])
    def test_output_length_formula(self, source, target):
        n = source // 2
        clip = AudioClip(np.zeros(n, dtype=np.float32), source)
        assert len(resample(clip, target).samples) == round(n * target / source)

    def test_tone_frequency_preserved_going_up(self):
        clip = AudioClip(make_tone(800.0, duration_s=1.0, sample_rate=8000), 8000)
        out = resample(clip, 16000)
        assert abs(dominant_frequency(out.samples, 16000) - 800.0) / 800.0 < 0.005


class TestNormalize:
    def test_full_scale_sine_lands_at_36_2_units(self):
        clip = AudioClip(make_tone(220.0, amplitude=1.0), 16000)
        out = normalize_and_scale(clip)
        # RMS 1/sqrt(2) -> gain 0.1*sqrt(2), then x256 -> peak 25.6*sqrt(2)
        assert abs(np.max(np.abs(out.samples)) - 36.2) < 0.1

    def test_already_at_target_is_fixed_point(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(size=8000).astype(np.float32)
        samples *= 0.1 / np.sqrt(np.mean(samples.astype(np.float64) ** 2))
        clip = AudioClip(samples, 16000)
        out = normalize_dbfs(clip)
        np.testing.assert_allclose(out.samples, samples, rtol=1e-5)

    def test_silence_untouched(self):
        clip = AudioClip(np.zeros(1000, dtype=np.float32), 16000)
        out = normalize_and_scale(clip)
        assert np.all(out.samples == 0.0)

    def test_stage_one_idempotent(self):
        clip = AudioClip(make_tone(300.0, amplitude=0.7), 16000)
        once = normalize_dbfs(clip)
        twice = normalize_dbfs(once)
        np.testing.assert_allclose(twice.samples, once.samples, rtol=1e-6)

    def test_peak_basis_flag(self):
        clip = AudioClip(make_tone(300.0, amplitude=0.5), 16000)
        out = normalize_dbfs(clip, basis="peak")
        assert abs(np.max(np.abs(out.samples)) - 0.1) < 1e-4

    def test_bad_basis(self):
        with pytest.raises(ConfigError):
            normalize_dbfs(AudioClip(np.ones(10, dtype=np.float32), 16000), basis="median")


class TestWindows:
    def test_ten_seconds_gives_sixteen_windows(self):
        clip = AudioClip(np.ones(160000, dtype=np.float32), 16000)
        windows = extract_windows(clip)
        assert len(windows) == 16
        assert windows[0].start == 0
        assert windows[-1].start == 144000  # 9.0 s

    def test_one_second_gives_one_padded_window(self):
        clip = AudioClip(np.ones(16000, dtype=np.float32), 16000)
        windows = extract_windows(clip)
        assert len(windows) == 1
        assert len(windows[0].samples) == 19200
        assert np.all(windows[0].samples[16000:] == 0.0)

    def test_half_second_gives_none(self):
        clip = AudioClip(np.ones(8000, dtype=np.float32), 16000)
        assert extract_windows(clip) == []

    def test_count_formula_against_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            n = int(rng.integers(1000, 120000))
            clip = AudioClip(np.ones(n, dtype=np.float32), 16000)
            windows = extract_windows(clip)
            expected = max(0, (n - 16000) // 9600 + 1) if n >= 16000 else 0
            assert len(windows) == expected, n

    def test_starts_are_hop_multiples_and_content_floor(self):
        clip = AudioClip(np.ones(70000, dtype=np.float32), 16000)
        for window in extract_windows(clip):
            assert window.start % 9600 == 0
            real = min(19200, 70000 - window.start)
            assert real >= 16000
            assert len(window.samples) == 19200

    def test_window_spec_validation(self):
        with pytest.raises(ConfigError):
            WindowSpec(duration_s=1.2, hop_s=0.6, min_content_s=1.5)
        with pytest.raises(ConfigError):
            WindowSpec(hop_s=0.0)


class TestRandomSegment:
    def test_exactly_one_second_is_deterministic(self):
        clip = AudioClip(np.arange(16000, dtype=np.float32), 16000)
        seg = random_segment(clip, np.random.default_rng(0))
        assert len(seg) == 19200
        np.testing.assert_array_equal(seg[:16000], clip.samples)
        assert np.all(seg[16000:] == 0.0)

    def test_start_range_covers_legal_interval(self):
        # 4.5 s utterance: legal starts are [0, 3.5 s]; read the start back
        # off a ramp signal (indices are exact in float32 up to 2^24)
        clip = AudioClip(np.arange(72000, dtype=np.float32), 16000)
        rng = np.random.default_rng(2)
        starts = [int(random_segment(clip, rng)[0]) for _ in range(400)]
        max_start = 72000 - 16000
        assert min(starts) >= 0 and max(starts) <= max_start
        assert min(starts) < 0.05 * max_start  # uniform draw reaches both ends
        assert max(starts) > 0.95 * max_start

    def test_rejects_below_minimum(self):
        clip = AudioClip(np.ones(12800, dtype=np.float32), 16000)  # 0.8 s
        with pytest.raises(ClipTooShortError):
            random_segment(clip, np.random.default_rng(0))

    def test_segments_always_full_length(self):
        rng = np.random.default_rng(3)
        for n in (16000, 19200, 30000, 72000):
            clip = AudioClip(np.ones(n, dtype=np.float32), 16000)
            assert len(random_segment(clip, rng)) == 19200
