"""Deterministic toy dataset: one sine class per "genre" plus white noise.

Class k gets a tone at 200 * 2^(k/3) Hz, third-octave spacing, so adjacent
classes land in different bands of the 64-mel reference featurizer and the
end-to-end pipeline is separable but not trivially so (20 dB SNR by
default). Clips are written as 16-bit mono WAV at 16 kHz in the same
``<root>/<genre>/<clip>.wav`` layout the real dataset uses, alongside a
manifest.csv.

Generation is reproducible to the byte: clip (k, i) draws its phase and
noise from ``numpy.random.default_rng([seed, k, i])`` regardless of write
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, encode_wav
from .dataset import DatasetManifest, ManifestEntry, write_manifest_csv
from .errors import InputError
from .framing import SAMPLE_RATE_HZ

_TONE_AMPLITUDE = 0.6


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 10
    clips_per_class: int = 30
    clip_seconds: float = 3.0
    snr_db: float = 20.0
    seed: int = 0

    def class_frequency_hz(self, k: int) -> float:
        return 200.0 * 2.0 ** (k / 3.0)

    def __post_init__(self) -> None:
        if self.n_classes < 1 or self.clips_per_class < 1:
            raise InputError("need at least one class and one clip per class")
        top = self.class_frequency_hz(self.n_classes - 1)
        if top >= SAMPLE_RATE_HZ / 2:
            raise InputError(
                f"highest class tone {top:.0f} Hz is not below Nyquist"
            )

    def genre_names(self) -> tuple[str, ...]:
        return tuple(f"tone{k:02d}" for k in range(self.n_classes))


def synth_clip(spec: SyntheticSpec, class_index: int,
               clip_index: int) -> AudioClip:
    """One tone-plus-noise clip; pure function of (spec, k, i)."""
    rng = np.random.default_rng([spec.seed, class_index, clip_index])
    n = int(round(spec.clip_seconds * SAMPLE_RATE_HZ))
    t = np.arange(n) / SAMPLE_RATE_HZ
    phase = rng.uniform(0.0, 2.0 * np.pi)
    tone = _TONE_AMPLITUDE * np.sin(
        2.0 * np.pi * spec.class_frequency_hz(class_index) * t + phase
    )
    signal_power = _TONE_AMPLITUDE**2 / 2.0
    noise_std = np.sqrt(signal_power / 10.0 ** (spec.snr_db / 10.0))
    samples = tone + rng.normal(0.0, noise_std, size=n)
    np.clip(samples, -1.0, 1.0, out=samples)
    clip_id = f"tone{class_index:02d}.{clip_index:05d}"
    return AudioClip(clip_id=clip_id, samples=samples.astype(np.float32),
                     sample_rate_hz=SAMPLE_RATE_HZ)


def generate(spec: SyntheticSpec, root: str | Path) -> DatasetManifest:
    """Write all clips and manifest.csv under root; returns the manifest."""
    root = Path(root)
    entries = []
    for k in range(spec.n_classes):
        genre = f"tone{k:02d}"
        genre_dir = root / genre
        genre_dir.mkdir(parents=True, exist_ok=True)
        for i in range(spec.clips_per_class):
            clip = synth_clip(spec, k, i)
            wav_path = genre_dir / f"{clip.clip_id}.wav"
            encode_wav(clip, wav_path)
            entries.append(ManifestEntry(clip_id=clip.clip_id, path=wav_path,
                                         genre=genre))
    manifest = DatasetManifest(entries=tuple(entries),
                               genres=spec.genre_names())
    write_manifest_csv(manifest, root / "manifest.csv")
    return manifest
