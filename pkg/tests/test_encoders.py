import numpy as np
import pytest

from genreprobe.audio_io import AudioClip
from genreprobe.encoders import (
    FeatureMatrix,
    extract_layers,
    handle_from_session,
    load_encoder,
    mel_band_centers,
    mel_filterbank,
    reference_logmel,
)
from genreprobe.errors import CapabilityError, InputError
from genreprobe.framing import frame_count

RATE = 16000


def make_clip(samples, clip_id="clip"):
    return AudioClip(clip_id, np.asarray(samples, dtype=np.float32), RATE)


# ----------------------------------------------------------------- logmel

def test_silence_hits_log_floor():
    fm = reference_logmel(make_clip(np.zeros(4000)))
    np.testing.assert_allclose(fm.values, np.log(1e-10), rtol=1e-6)


def test_1khz_sine_peaks_in_nearest_band():
    t = np.arange(48_000) / RATE
    fm = reference_logmel(make_clip(np.sin(2 * np.pi * 1000.0 * t)))
    nearest = int(np.argmin(np.abs(mel_band_centers(64) - 1000.0)))
    assert np.all(fm.values.argmax(axis=1) == nearest)


def test_30s_clip_shape():
    fm = reference_logmel(make_clip(np.zeros(480_000)))
    assert fm.values.shape == (1499, 64)
    assert fm.model_id == "logmel64"
    assert fm.layer_index == 0
    assert fm.stride_ms == 20
    assert fm.values.dtype == np.float32


def test_logmel_rejects_wrong_rate():
    clip = AudioClip("c", np.zeros(4000, dtype=np.float32), 22050)
    with pytest.raises(InputError):
        reference_logmel(clip)


def test_logmel_rejects_subwindow_clip():
    with pytest.raises(InputError):
        reference_logmel(make_clip(np.zeros(399)))


def test_logmel_deterministic():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 8000)
    a = reference_logmel(make_clip(x)).values
    b = reference_logmel(make_clip(x)).values
    np.testing.assert_array_equal(a, b)


def test_concat_alignment_on_stride_multiples():
    rng = np.random.default_rng(1)
    a = rng.uniform(-1, 1, 3200)  # 10 strides
    b = rng.uniform(-1, 1, 4800)  # 15 strides
    fa = reference_logmel(make_clip(a)).values
    fb = reference_logmel(make_clip(b)).values
    combined = reference_logmel(make_clip(np.concatenate([a, b]))).values
    # per-clip frames appear bit-identically at their aligned offsets;
    # the frames straddling the junction are new
    np.testing.assert_array_equal(combined[: len(fa)], fa)
    np.testing.assert_array_equal(combined[len(a) // 320 :], fb)


def test_filterbank_covers_every_bin_up_to_8k():
    bank = mel_filterbank(64)
    assert bank.shape == (64, 257)
    assert bank.max() == pytest.approx(1.0, abs=0.2)
    centers = mel_band_centers(64)
    assert centers[0] > 0 and centers[-1] < 8000


# ------------------------------------------------------- onnx-style backend

class FakeTensor:
    def __init__(self, name, shape):
        self.name = name
        self.shape = shape


class FakeMeta:
    def __init__(self, mapping):
        self.custom_metadata_map = mapping


class FakeSession:
    """Duck-typed onnxruntime session over a deterministic linear model."""

    def __init__(self, layer_count=3, dim=16, metadata=None, per_layer=False,
                 input_rank=1, frame_offset=0):
        self.layer_count = layer_count
        self.dim = dim
        self.per_layer = per_layer
        self.input_rank = input_rank
        self.frame_offset = frame_offset
        self.metadata = metadata if metadata is not None else {
            "model_id": "fake-encoder",
            "layer_count": str(layer_count),
            "dim": str(dim),
        }

    def get_inputs(self):
        shape = ["n"] if self.input_rank == 1 else [1, "n"]
        return [FakeTensor("waveform", shape)]

    def get_outputs(self):
        if self.per_layer:
            return [FakeTensor(f"layer_{k}", ["frames", self.dim])
                    for k in range(self.layer_count + 1)]
        return [FakeTensor("hidden_states",
                           [self.layer_count + 1, "frames", self.dim])]

    def get_modelmeta(self):
        return FakeMeta(self.metadata)

    def _hidden(self, wave):
        wave = np.asarray(wave)
        if wave.ndim == 2:
            wave = wave[0]
        frames = max(0, (len(wave) - 400) // 320 + 1) + self.frame_offset
        base = np.add.outer(np.arange(frames, dtype=np.float32),
                            np.arange(self.dim, dtype=np.float32))
        return np.stack([base * (k + 1)
                         for k in range(self.layer_count + 1)])

    def run(self, names, feeds):
        hidden = self._hidden(next(iter(feeds.values())))
        out = []
        for name in names:
            if name == "hidden_states":
                out.append(hidden)
            else:
                out.append(hidden[int(name.split("_")[1])])
        return out


def test_handle_reads_metadata():
    handle = handle_from_session(FakeSession(layer_count=24, dim=1024))
    assert handle.model_id == "fake-encoder"
    assert handle.layer_count == 24
    assert handle.dim_per_layer[0] == 1024
    assert handle.dim_per_layer[24] == 1024


def test_handle_infers_from_static_shapes_without_metadata():
    sess = FakeSession(layer_count=3, dim=16, metadata={})
    handle = handle_from_session(sess, default_model_id="fallback")
    assert handle.model_id == "fallback"
    assert handle.layer_count == 3
    assert handle.dim_per_layer == {k: 16 for k in range(4)}


def test_handle_per_layer_outputs():
    handle = handle_from_session(FakeSession(per_layer=True, metadata={}))
    assert handle.layer_count == 3


def test_no_hidden_state_outputs_is_capability_error():
    class NoOutputs(FakeSession):
        def get_outputs(self):
            return [FakeTensor("logits", ["n"])]

    with pytest.raises(CapabilityError):
        handle_from_session(NoOutputs())


def test_dynamic_layers_without_metadata_is_capability_error():
    class DynamicStack(FakeSession):
        def get_outputs(self):
            return [FakeTensor("hidden_states", ["l", "frames", self.dim])]

    with pytest.raises(CapabilityError):
        handle_from_session(DynamicStack(metadata={}))


def test_extract_layers_shapes_and_values():
    handle = handle_from_session(FakeSession(layer_count=5, dim=8))
    clip = make_clip(np.zeros(16_000))
    mats = extract_layers(handle, clip, {1, 3})
    assert [m.layer_index for m in mats] == [1, 3]
    expected_frames = frame_count(16_000)
    assert all(m.values.shape == (expected_frames, 8) for m in mats)
    np.testing.assert_array_equal(mats[1].values, mats[0].values * 2)


def test_extract_layers_empty_set():
    handle = handle_from_session(FakeSession())
    assert extract_layers(handle, make_clip(np.zeros(1000)), set()) == []


def test_extract_layers_deterministic():
    handle = handle_from_session(FakeSession())
    clip = make_clip(np.random.default_rng(5).uniform(-1, 1, 8000))
    a = extract_layers(handle, clip, [0])[0].values
    b = extract_layers(handle, clip, [0])[0].values
    np.testing.assert_array_equal(a, b)


def test_extract_layers_out_of_range():
    handle = handle_from_session(FakeSession(layer_count=3))
    with pytest.raises(InputError):
        extract_layers(handle, make_clip(np.zeros(1000)), [4])


def test_extract_layers_wrong_rate():
    handle = handle_from_session(FakeSession())
    clip = AudioClip("c", np.zeros(1000, dtype=np.float32), 22050)
    with pytest.raises(InputError):
        extract_layers(handle, clip, [0])


def test_extract_layers_subwindow_clip():
    handle = handle_from_session(FakeSession())
    with pytest.raises(InputError):
        extract_layers(handle, make_clip(np.zeros(399)), [0])


def test_frame_count_mismatch_detected():
    handle = handle_from_session(FakeSession(frame_offset=1))
    with pytest.raises(CapabilityError):
        extract_layers(handle, make_clip(np.zeros(1000)), [0])


def test_load_encoder_missing_file(tmp_path):
    with pytest.raises(InputError):
        load_encoder(tmp_path / "nope.onnx")


def test_load_encoder_without_runtime_is_capability_error(tmp_path):
    try:
        import onnxruntime  # noqa: F401
        pytest.skip("onnxruntime installed; missing-runtime path unreachable")
    except ImportError:
        pass
    stub = tmp_path / "m.onnx"
    stub.write_bytes(b"not a real model")
    with pytest.raises(CapabilityError):
        load_encoder(stub)
