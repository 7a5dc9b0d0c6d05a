import wave

import numpy as np
import pytest

from pathoclf.augment import (
    Rir,
    UnsupportedBitDepthError,
    UnsupportedChannelsError,
    Waveform,
    augment_corpus,
    convolve,
    list_rirs,
    quantize_pcm16,
    read_wav,
    rir_choice,
    scale_rir,
    write_wav,
)
from pathoclf.core import DataError
from pathoclf.ingest import UtteranceRecord, parse_manifest, write_manifest


def direct_convolution(x, h):
    """Textbook double loop: y[n] = sum_k x[k] h[n-k]."""
    y = np.zeros(len(x) + len(h) - 1)
    for i, xv in enumerate(x):
        for j, hv in enumerate(h):
            y[i + j] += xv * hv
    return y


class TestConvolve:
    def test_unit_impulse_identity(self):
        w = Waveform([0.1, -0.2, 0.3], 16000)
        out = convolve(w, Rir([1.0], 16000))
        np.testing.assert_array_equal(out.samples, w.samples)

    def test_delayed_impulse(self):
        w = Waveform([0.1, -0.2, 0.3], 16000)
        out = convolve(w, Rir([0.0, 0.0, 1.0], 16000))
        np.testing.assert_array_equal(out.samples, [0, 0, 0.1, -0.2, 0.3])

    def test_fuzz_length_and_direct_sum(self, rng):
        for _ in range(30):
            n, m = int(rng.integers(1, 400)), int(rng.integers(1, 300))
            x = rng.uniform(-1, 1, n)
            h = rng.uniform(-1, 1, m) * np.exp(-np.arange(m) / 50)
            out = convolve(Waveform(x, 8000), Rir(h, 8000)).samples
            assert out.size == n + m - 1
            np.testing.assert_allclose(out, direct_convolution(x, h), atol=1e-6)

    def test_fft_path_agrees(self, rng):
        # large enough to take the FFT branch
        x = rng.uniform(-1, 1, 3000)
        h = rng.uniform(-1, 1, 400)
        out = convolve(Waveform(x, 8000), Rir(h, 8000)).samples
        np.testing.assert_allclose(out, np.convolve(x, h), atol=1e-6)

    def test_sample_rate_mismatch(self):
        with pytest.raises(DataError, match="sample-rate"):
            convolve(Waveform([1.0], 16000), Rir([1.0], 8000))

    def test_scale_by_two_doubles_output(self, rng):
        for n, m in [(50, 20), (3000, 500)]:
            w = Waveform(rng.uniform(-0.5, 0.5, n), 16000)
            r = Rir(rng.uniform(-0.5, 0.5, m), 16000)
            once = convolve(w, r).samples
            twice = convolve(w, scale_rir(r, 2.0)).samples
            # scaling by 2 is exact in binary floating point
            np.testing.assert_array_equal(twice, 2.0 * once)


class TestWav:
    def test_roundtrip_error_bound(self, tmp_path, rng):
        x = rng.uniform(-0.99, 0.99, 5000)
        write_wav(Waveform(x, 16000), tmp_path / "a.wav")
        back = read_wav(tmp_path / "a.wav")
        assert back.sample_rate == 16000
        assert np.max(np.abs(back.samples - x)) <= 1 / 32768

    def test_clipping_only_on_write(self, tmp_path):
        write_wav(Waveform([2.0, -2.0, 0.5], 8000), tmp_path / "c.wav")
        back = read_wav(tmp_path / "c.wav").samples
        np.testing.assert_array_equal(back, [32767 / 32768, -1.0, 0.5])

    def test_quantize_half_away_from_zero(self):
        q = quantize_pcm16(np.array([0.5, -0.5, 1.5, -1.5]) / 32768)
        np.testing.assert_array_equal(q, [1, -1, 2, -2])

    def _raw_wav(self, path, channels, width):
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(channels)
            wf.setsampwidth(width)
            wf.setframerate(8000)
            wf.writeframes(b"\0" * (channels * width * 4))

    def test_stereo_rejected(self, tmp_path):
        self._raw_wav(tmp_path / "s.wav", 2, 2)
        with pytest.raises(UnsupportedChannelsError):
            read_wav(tmp_path / "s.wav")

    def test_24bit_rejected(self, tmp_path):
        self._raw_wav(tmp_path / "b.wav", 1, 3)
        with pytest.raises(UnsupportedBitDepthError):
            read_wav(tmp_path / "b.wav")


def _setup_corpus(tmp_path, rng, n_utts=6, n_rirs=3):
    (tmp_path / "rirs").mkdir()
    for k in range(n_rirs):
        taps = np.zeros(30)
        taps[k] = 0.25
        write_wav(Waveform(taps, 8000), tmp_path / "rirs" / f"r{k}.wav")
    recs = []
    for i in range(n_utts):
        write_wav(Waveform(rng.uniform(-0.3, 0.3, 200), 8000), tmp_path / "audio" / f"u{i}.wav")
        recs.append(UtteranceRecord(f"u{i}", "PD", "CLN", f"emb/u{i}.{{layer}}.emb", (("audio", f"audio/u{i}.wav"),)))
    write_manifest(recs, tmp_path / "m.csv")
    return tmp_path / "m.csv"


class TestAugmentCorpus:
    def test_assignments_follow_seed_replay(self, tmp_path, rng):
        manifest = _setup_corpus(tmp_path, rng)
        out = augment_corpus(manifest, tmp_path / "rirs", 11, tmp_path / "out")
        recs = parse_manifest(out)
        assert [r.corpus for r in recs] == ["CLN-REV"] * 6
        bank = list_rirs(tmp_path / "rirs")
        lines = (tmp_path / "out" / "rir_assignments.csv").read_text().splitlines()[1:]
        for i, line in enumerate(lines):
            rid, name, idx = line.split(",")
            # replay the RNG independently of the corpus loop
            assert int(idx) == rir_choice(11, i, len(bank))
            assert name == bank[int(idx)].name
            # output equals quantised(2 * taps conv audio)
            src = read_wav(tmp_path / "audio" / f"{rid}.wav")
            rir = read_wav(bank[int(idx)])
            expected = quantize_pcm16(direct_convolution(src.samples, 2.0 * rir.samples)) / 32768.0
            np.testing.assert_array_equal(read_wav(tmp_path / "out" / "audio" / f"{rid}.wav").samples, expected)

    def test_deterministic_and_inputs_untouched(self, tmp_path, rng):
        manifest = _setup_corpus(tmp_path, rng)
        before = manifest.read_bytes()
        augment_corpus(manifest, tmp_path / "rirs", 5, tmp_path / "o1")
        augment_corpus(manifest, tmp_path / "rirs", 5, tmp_path / "o2")
        assert manifest.read_bytes() == before
        for name in ("manifest.csv", "rir_assignments.csv", "audio/u3.wav"):
            assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()

    def test_empty_bank(self, tmp_path, rng):
        manifest = _setup_corpus(tmp_path, rng)
        (tmp_path / "empty").mkdir()
        with pytest.raises(DataError, match="empty RIR bank"):
            augment_corpus(manifest, tmp_path / "empty", 0, tmp_path / "o")

    def test_missing_audio_column(self, tmp_path, rng):
        _setup_corpus(tmp_path, rng)
        write_manifest([UtteranceRecord("x", "PD", "C", "t")], tmp_path / "bare.csv")
        with pytest.raises(DataError, match="audio"):
            augment_corpus(tmp_path / "bare.csv", tmp_path / "rirs", 0, tmp_path / "o")

    def test_seed_changes_assignment(self):
        a = [rir_choice(1, i, 10) for i in range(50)]
        b = [rir_choice(2, i, 10) for i in range(50)]
        assert a != b
        assert all(0 <= v < 10 for v in a)
