"""Feature-extraction backends: exported neural encoders and a log-mel reference.

Both backends emit one row per 25 ms / 20 ms-stride segment (see
:mod:`genreprobe.framing`) and agree exactly with ``frame_count`` on the
number of rows.

Exported encoders are ONNX files run through onnxruntime. The file contract:

* one float waveform input, shape ``[n_samples]`` or ``[1, n_samples]``;
* hidden states exposed either as a single rank-3 output
  ``[layer_count + 1, frames, dim]`` or as per-layer outputs named
  ``layer_0 .. layer_<L>`` of shape ``[frames, dim]`` (a leading batch axis
  of 1 is tolerated);
* optional metadata properties ``model_id``, ``layer_count`` and ``dim``
  (uniform) or ``dims`` (JSON object mapping layer index to width).

Layer index 0 addresses the convolutional front-end output, 1..L the
transformer blocks.

The log-mel featurizer exists so the full pipeline runs and is testable with
no model files at all: Hann window of 400 samples, zero-padded 512-point FFT,
power spectrum, 64 triangular mel filters on 0..8000 Hz, log(x + 1e-10).

Precomputed-feature files (the third backend) are read back through
:mod:`genreprobe.feature_store`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .audio_io import AudioClip
from .errors import CapabilityError, InputError
from .framing import DEFAULT_FRAME_SPEC, SAMPLE_RATE_HZ, FrameSpec, frame_count

LOG_FLOOR = 1e-10
_FFT_SIZE = 512
_MEL_HIGH_HZ = 8000.0


@dataclass(frozen=True)
class FeatureMatrix:
    """frames x dim features of one clip at one encoder layer."""

    clip_id: str
    model_id: str
    layer_index: int
    values: np.ndarray  # float32, shape (frames, dim)
    stride_ms: int = 20

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int = _FFT_SIZE,
                   sample_rate: int = SAMPLE_RATE_HZ,
                   high_hz: float = _MEL_HIGH_HZ) -> np.ndarray:
    """Triangular unit-peak filters, shape (n_mels, n_fft // 2 + 1)."""
    mel_points = np.linspace(0.0, float(_hz_to_mel(high_hz)), n_mels + 2)
    hz_points = _mel_to_hz(mel_points)
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    weights = np.zeros((n_mels, len(bin_hz)))
    for b in range(n_mels):
        lo, center, hi = hz_points[b], hz_points[b + 1], hz_points[b + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        weights[b] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def mel_band_centers(n_mels: int, high_hz: float = _MEL_HIGH_HZ) -> np.ndarray:
    """Center frequency in Hz of each triangular band."""
    mel_points = np.linspace(0.0, float(_hz_to_mel(high_hz)), n_mels + 2)
    return _mel_to_hz(mel_points)[1:-1]


def _frame_signal(x: np.ndarray, spec: FrameSpec) -> np.ndarray:
    n_frames = frame_count(len(x), spec)
    idx = np.arange(spec.window_samples)[None, :] + \
        spec.stride_samples * np.arange(n_frames)[:, None]
    return x[idx]


def reference_logmel(clip: AudioClip, spec: FrameSpec = DEFAULT_FRAME_SPEC,
                     n_mels: int = 64) -> FeatureMatrix:
    """Deterministic log-mel features on the shared segment grid."""
    _require_16k(clip)
    if len(clip.samples) < spec.window_samples:
        raise InputError(
            f"clip {clip.clip_id!r}: {len(clip.samples)} samples is shorter "
            f"than one {spec.window_samples}-sample window"
        )
    frames = _frame_signal(np.asarray(clip.samples, dtype=np.float64), spec)
    window = np.hanning(spec.window_samples)
    spectrum = np.fft.rfft(frames * window, n=_FFT_SIZE, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    bank = mel_filterbank(n_mels)
    values = np.log(power @ bank.T + LOG_FLOOR).astype(np.float32)
    return FeatureMatrix(clip_id=clip.clip_id, model_id=f"logmel{n_mels}",
                         layer_index=0, values=values)


class _HiddenStateRunner:
    """Adapter around an onnxruntime-style session.

    Anything with ``get_inputs``, ``get_outputs``, ``get_modelmeta`` and
    ``run`` works, which keeps the layer-slicing logic testable without
    onnxruntime installed.
    """

    def __init__(self, session, default_model_id: str):
        self._session = session
        inputs = session.get_inputs()
        if len(inputs) != 1:
            raise CapabilityError(
                f"expected exactly one waveform input, model has {len(inputs)}"
            )
        self._input_name = inputs[0].name
        self._input_rank = len(inputs[0].shape)
        if self._input_rank not in (1, 2):
            raise CapabilityError(
                f"waveform input must be rank 1 or 2, got rank {self._input_rank}"
            )

        meta = dict(session.get_modelmeta().custom_metadata_map or {})
        self.model_id = meta.get("model_id", default_model_id)

        outputs = session.get_outputs()
        layer_outputs = {}
        for out in outputs:
            name = getattr(out, "name", "")
            if name.startswith("layer_") and name[6:].isdigit():
                layer_outputs[int(name[6:])] = out
        stacked = [o for o in outputs if len(o.shape) == 3]

        if layer_outputs:
            self._stacked_name = None
            self._layer_names = layer_outputs
            count = max(layer_outputs)
            if set(layer_outputs) != set(range(count + 1)):
                raise CapabilityError(
                    f"per-layer outputs must cover layer_0..layer_{count}, "
                    f"got {sorted(layer_outputs)}"
                )
        elif len(stacked) == 1:
            self._stacked_name = stacked[0].name
            self._layer_names = None
            first = stacked[0].shape[0]
            count = first - 1 if isinstance(first, int) else None
        else:
            raise CapabilityError(
                "model exposes no hidden-state outputs (need a single "
                "[layers+1, frames, dim] output or layer_<k> outputs)"
            )

        if "layer_count" in meta:
            count = int(meta["layer_count"])
        if count is None:
            raise CapabilityError(
                "cannot determine layer count: stacked output has a dynamic "
                "leading axis and metadata carries no layer_count"
            )
        self.layer_count = count

        self.dim_per_layer = self._resolve_dims(meta, outputs)

    def _resolve_dims(self, meta, outputs) -> dict[int, int]:
        all_layers = range(self.layer_count + 1)
        if "dims" in meta:
            parsed = json.loads(meta["dims"])
            return {int(k): int(v) for k, v in parsed.items()}
        if "dim" in meta:
            return {k: int(meta["dim"]) for k in all_layers}
        if self._layer_names is not None:
            dims = {}
            for k, out in self._layer_names.items():
                last = out.shape[-1]
                if not isinstance(last, int):
                    raise CapabilityError(f"layer_{k}: dynamic width and no metadata")
                dims[k] = last
            return dims
        last = next(o.shape[-1] for o in outputs if o.name == self._stacked_name)
        if not isinstance(last, int):
            raise CapabilityError("dynamic feature width and no dim metadata")
        return {k: last for k in all_layers}

    def run(self, waveform: np.ndarray, layers: list[int]) -> dict[int, np.ndarray]:
        feed = waveform if self._input_rank == 1 else waveform[None, :]
        if self._stacked_name is not None:
            (out,) = self._session.run([self._stacked_name],
                                       {self._input_name: feed})
            return {k: np.asarray(out[k]) for k in layers}
        names = [f"layer_{k}" for k in layers]
        results = self._session.run(names, {self._input_name: feed})
        by_layer = {}
        for k, arr in zip(layers, results):
            arr = np.asarray(arr)
            if arr.ndim == 3 and arr.shape[0] == 1:
                arr = arr[0]
            by_layer[k] = arr
        return by_layer


@dataclass(frozen=True)
class EncoderHandle:
    """A loaded encoder: identity, geometry, and the run hook."""

    model_id: str
    layer_count: int
    dim_per_layer: Mapping[int, int]
    frame_spec: FrameSpec = field(default_factory=FrameSpec)
    runner: _HiddenStateRunner | None = None


def handle_from_session(session, default_model_id: str = "model") -> EncoderHandle:
    """Build a handle from any session-shaped object (see module docstring)."""
    runner = _HiddenStateRunner(session, default_model_id)
    return EncoderHandle(
        model_id=runner.model_id,
        layer_count=runner.layer_count,
        dim_per_layer=runner.dim_per_layer,
        runner=runner,
    )


def load_encoder(model_path: str | Path) -> EncoderHandle:
    """Open an exported ONNX encoder. Needs the optional onnxruntime dep."""
    model_path = Path(model_path)
    if not model_path.is_file():
        raise InputError(f"model file not found: {model_path}")
    try:
        import onnxruntime as ort
    except ImportError as exc:
        raise CapabilityError(
            "onnxruntime is not installed; install genreprobe[onnx] to use "
            "exported encoders"
        ) from exc
    opts = ort.SessionOptions()
    opts.log_severity_level = 3
    session = ort.InferenceSession(str(model_path), sess_options=opts,
                                   providers=["CPUExecutionProvider"])
    return handle_from_session(session, default_model_id=model_path.stem)


def extract_layers(handle: EncoderHandle, clip: AudioClip,
                   layers) -> list[FeatureMatrix]:
    """Run the encoder once and return matrices for ``layers`` in sorted order."""
    _require_16k(clip)
    wanted = sorted(set(int(k) for k in layers))
    if not wanted:
        return []
    if wanted[0] < 0 or wanted[-1] > handle.layer_count:
        raise InputError(
            f"layer out of range: model {handle.model_id} has layers "
            f"0..{handle.layer_count}, requested {wanted}"
        )
    if len(clip.samples) < handle.frame_spec.window_samples:
        raise InputError(
            f"clip {clip.clip_id!r}: shorter than one analysis window"
        )
    if handle.runner is None:
        raise CapabilityError(f"handle {handle.model_id} has no runner attached")

    expected = frame_count(len(clip.samples), handle.frame_spec)
    waveform = np.ascontiguousarray(clip.samples, dtype=np.float32)
    outputs = handle.runner.run(waveform, wanted)

    matrices = []
    for k in wanted:
        arr = np.asarray(outputs[k], dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] != expected:
            raise CapabilityError(
                f"layer {k}: model produced shape {arr.shape}, expected "
                f"({expected}, {handle.dim_per_layer.get(k, '?')})"
            )
        matrices.append(FeatureMatrix(
            clip_id=clip.clip_id, model_id=handle.model_id,
            layer_index=k, values=arr,
        ))
    return matrices


def _require_16k(clip: AudioClip) -> None:
    if clip.sample_rate_hz != SAMPLE_RATE_HZ:
        raise InputError(
            f"clip {clip.clip_id!r} is at {clip.sample_rate_hz} Hz; encoders "
            f"take {SAMPLE_RATE_HZ} Hz input (resample first)"
        )
