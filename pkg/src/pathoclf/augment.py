"""Reverberation of raw audio with room impulse responses.

Audio goes through 16-bit PCM mono WAV files. Convolution output is never
renormalised; clipping happens only when a waveform is quantised on write.
"""

from __future__ import annotations

import csv
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .core import DataError, ConfigError, make_rng
from .ingest import UtteranceRecord, parse_manifest, write_manifest

RIR_SCALE = 2.0
# below this many multiply-adds the direct sum is used instead of FFT
_DIRECT_LIMIT = 1 << 16


class WavFormatError(DataError):
    pass


class UnsupportedChannelsError(WavFormatError):
    pass


class UnsupportedBitDepthError(WavFormatError):
    pass


class UnsupportedCodecError(WavFormatError):
    pass


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise DataError("waveform must be a non-empty 1-D signal")
        if not np.all(np.isfinite(s)):
            raise DataError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True, eq=False)
class Rir:
    taps: np.ndarray
    sample_rate: int

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=np.float64)
        if t.ndim != 1 or t.size == 0:
            raise DataError("RIR must be a non-empty 1-D signal")
        if not np.all(np.isfinite(t)):
            raise DataError("RIR contains non-finite taps")
        object.__setattr__(self, "taps", t)


def read_wav(path) -> Waveform:
    path = Path(path)
    try:
        wf = wave.open(str(path), "rb")
    except FileNotFoundError:
        raise DataError(f"{path}: audio file not found") from None
    except wave.Error as exc:
        raise UnsupportedCodecError(f"{path}: unsupported WAV encoding ({exc})") from None
    except EOFError:
        raise WavFormatError(f"{path}: truncated WAV header") from None
    with wf:
        if wf.getnchannels() != 1:
            raise UnsupportedChannelsError(f"{path}: unsupported channels: {wf.getnchannels()} (mono required)")
        if wf.getsampwidth() != 2:
            raise UnsupportedBitDepthError(f"{path}: unsupported bit depth: {8 * wf.getsampwidth()} (16 required)")
        if wf.getcomptype() != "NONE":
            raise UnsupportedCodecError(f"{path}: unsupported codec {wf.getcomptype()!r}")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def quantize_pcm16(samples) -> np.ndarray:
    """Round half away from zero, then clamp to the int16 range."""
    x = np.asarray(samples, dtype=np.float64) * 32768.0
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype("<i2")


def write_wav(w: Waveform, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(w.sample_rate))
        wf.writeframes(quantize_pcm16(w.samples).tobytes())


def scale_rir(r: Rir, factor: float = RIR_SCALE) -> Rir:
    if not np.isfinite(factor):
        raise ConfigError(f"RIR scale factor must be finite, got {factor}")
    return Rir(r.taps * factor, r.sample_rate)


def convolve(w: Waveform, r: Rir) -> Waveform:
    """Full linear convolution, length ``len(w) + len(r) - 1``."""
    if w.sample_rate != r.sample_rate:
        raise DataError(f"sample-rate mismatch: audio {w.sample_rate} Hz vs RIR {r.sample_rate} Hz")
    if w.samples.size * r.taps.size <= _DIRECT_LIMIT:
        out = np.convolve(w.samples, r.taps, mode="full")
    else:
        out = signal.fftconvolve(w.samples, r.taps, mode="full")
    return Waveform(out, w.sample_rate)


def list_rirs(rir_dir) -> list[Path]:
    rir_dir = Path(rir_dir)
    if not rir_dir.is_dir():
        raise DataError(f"{rir_dir}: RIR directory not found")
    bank = sorted(p for p in rir_dir.iterdir() if p.suffix.lower() == ".wav")
    if not bank:
        raise DataError(f"{rir_dir}: empty RIR bank (no .wav files)")
    return bank


def rir_choice(seed: int, utterance_index: int, bank_size: int) -> int:
    """RIR index for one utterance; depends only on (seed, index)."""
    return int(make_rng(seed, 0xA06, utterance_index).integers(bank_size))


def augment_corpus(manifest, rir_dir, seed: int, out_dir, factor: float = RIR_SCALE) -> Path:
    """Reverberate every utterance's ``audio`` WAV and write an augmented manifest.

    The output manifest keeps the ingest column layout. ``corpus`` gets a
    ``-REV`` suffix, ``audio`` points at the reverberated file and
    ``emb_template`` is redirected to ``embeddings/<id>.layer{layer}.emb``,
    where externally extracted embeddings of the new audio are expected. Both
    paths are relative to the output directory, so the result can be moved. An
    ``rir_assignments.csv`` audit file records the chosen RIR per utterance.
    """
    manifest = Path(manifest)
    out_dir = Path(out_dir)
    records = parse_manifest(manifest)
    bank = list_rirs(rir_dir)
    rirs = {}
    new_records: list[UtteranceRecord] = []
    assignments = []
    for i, rec in enumerate(records):
        audio = rec.get("audio")
        if not audio:
            raise DataError(f"record {rec.id!r}: no source audio (manifest needs an 'audio' column)")
        src = Path(audio)
        if not src.is_absolute():
            src = manifest.parent / src
        if not src.exists():
            raise DataError(f"record {rec.id!r}: missing audio {src}")
        k = rir_choice(seed, i, len(bank))
        if k not in rirs:
            w = read_wav(bank[k])
            rirs[k] = scale_rir(Rir(w.samples, w.sample_rate), factor)
        rev = convolve(read_wav(src), rirs[k])
        dst = out_dir / "audio" / f"{rec.id}.wav"
        write_wav(rev, dst)
        extra = dict(rec.extra)
        extra["audio"] = f"audio/{rec.id}.wav"
        new_records.append(
            UtteranceRecord(
                id=rec.id,
                label=rec.label,
                corpus=f"{rec.corpus}-REV",
                emb_template=f"embeddings/{rec.id}.layer{{layer}}.emb",
                extra=tuple(extra.items()),
            )
        )
        assignments.append((rec.id, bank[k].name, k))
    out_manifest = out_dir / "manifest.csv"
    write_manifest(new_records, out_manifest)
    with (out_dir / "rir_assignments.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "rir", "rir_index"])
        w.writerows(assignments)
    return out_manifest
