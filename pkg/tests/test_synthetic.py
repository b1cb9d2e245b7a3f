import numpy as np
import pytest

from genreprobe.audio_io import decode_wav
from genreprobe.encoders import reference_logmel
from genreprobe.errors import InputError
from genreprobe.framing import frame_count
from genreprobe.synthetic import SyntheticSpec, generate, synth_clip

SMALL = SyntheticSpec(n_classes=3, clips_per_class=2, clip_seconds=0.5, seed=5)


def test_default_counts(default_synth):
    manifest = default_synth["manifest"]
    assert len(manifest.entries) == 300
    assert len(manifest.genres) == 10
    per_class = {g: 0 for g in manifest.genres}
    for e in manifest.entries:
        per_class[e.genre] += 1
    assert all(v == 30 for v in per_class.values())
    assert (default_synth["root"] / "manifest.csv").is_file()


def test_default_clip_length_and_frames():
    clip = synth_clip(SyntheticSpec(), 0, 0)
    assert len(clip.samples) == 48_000
    assert frame_count(len(clip.samples)) == 149
    assert reference_logmel(clip).values.shape == (149, 64)


def test_same_seed_byte_identical_wavs(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate(SMALL, a)
    generate(SMALL, b)
    wavs = sorted(p.relative_to(a) for p in a.rglob("*.wav"))
    assert len(wavs) == 6
    for rel in wavs:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_different_seed_differs(tmp_path):
    generate(SMALL, tmp_path / "a")
    other = SyntheticSpec(n_classes=3, clips_per_class=2, clip_seconds=0.5,
                          seed=6)
    generate(other, tmp_path / "b")
    one = next((tmp_path / "a").rglob("*.wav"))
    assert one.read_bytes() != (tmp_path / "b" / one.parent.name / one.name).read_bytes()


def test_classes_map_to_distinct_mel_bands():
    spec = SyntheticSpec()
    dominant = []
    for k in range(spec.n_classes):
        fm = reference_logmel(synth_clip(spec, k, 0))
        bands = fm.values.argmax(axis=1)
        dominant.append(int(np.bincount(bands).argmax()))
    assert len(set(dominant)) == spec.n_classes
    assert dominant == sorted(dominant)  # frequency order preserved


def test_tones_must_stay_below_nyquist():
    with pytest.raises(InputError):
        SyntheticSpec(n_classes=17)
    # class 16 tone: 200 * 2^(16/3) ~ 8063 Hz, already over
    top_ok = SyntheticSpec(n_classes=16)
    assert top_ok.class_frequency_hz(15) < 8000


def test_samples_in_range_and_decodable(tmp_path):
    generate(SMALL, tmp_path)
    wav = next(tmp_path.rglob("*.wav"))
    clip = decode_wav(wav)
    assert clip.sample_rate_hz == 16_000
    assert np.all(clip.samples <= 1.0) and np.all(clip.samples >= -1.0)
    assert len(clip.samples) == 8000


def test_snr_near_requested():
    # tone at known frequency: compare band power against the rest
    spec = SyntheticSpec(clip_seconds=2.0, snr_db=20.0)
    clip = synth_clip(spec, 4, 0)
    spectrum = np.abs(np.fft.rfft(clip.samples.astype(np.float64))) ** 2
    freq_hz = spec.class_frequency_hz(4)
    bin_width = 16000 / len(clip.samples)
    center = int(round(freq_hz / bin_width))
    tone_power = spectrum[center - 3 : center + 4].sum()
    noise_power = spectrum.sum() - tone_power
    measured_db = 10 * np.log10(tone_power / noise_power)
    assert measured_db == pytest.approx(20.0, abs=1.5)
