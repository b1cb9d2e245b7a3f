"""Checkpoint to ONNX conversion.

The exported graph takes one float32 waveform at 16 kHz (shape [n_samples],
dynamic) and returns a single float32 output ``hidden_states`` of shape
[layer_count + 1, frames, dim]: the convolutional front-end projection at
index 0 followed by every transformer block. Metadata properties model_id,
layer_count, dim and dims are written into the file so consumers can size
themselves without running the model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .catalogue import CheckpointInfo, resolve_checkpoint


class ExportError(RuntimeError):
    pass


@dataclass
class ExportSpec:
    checkpoint: str
    output_path: str
    opset: int = 17
    model_id: str | None = None
    example_seconds: float = 1.0


class HiddenStateStacker(torch.nn.Module):
    """Waveform -> [layers+1, frames, dim] stack of all hidden states."""

    def __init__(self, encoder: torch.nn.Module):
        super().__init__()
        self.encoder = encoder

    def forward(self, waveform: torch.Tensor) -> torch.Tensor:
        outputs = self.encoder(waveform.unsqueeze(0),
                               output_hidden_states=True)
        return torch.cat(list(outputs.hidden_states), dim=0)


def load_checkpoint(checkpoint: str) -> tuple[torch.nn.Module, CheckpointInfo | None]:
    """Load a catalogue key, hub id, or local directory as a bare encoder."""
    from transformers import AutoModel

    source, info = resolve_checkpoint(checkpoint)
    try:
        model = AutoModel.from_pretrained(source)
    except Exception as exc:
        raise ExportError(f"cannot load checkpoint {checkpoint!r} "
                          f"(resolved to {source!r}): {exc}") from exc
    model.eval()
    return model, info


def geometry_of(model: torch.nn.Module) -> tuple[int, int]:
    config = model.config
    return int(config.num_hidden_layers), int(config.hidden_size)


def check_against_catalogue(model: torch.nn.Module,
                            info: CheckpointInfo) -> None:
    layers, dim = geometry_of(model)
    if (layers, dim) != (info.layer_count, info.dim):
        raise ExportError(
            f"checkpoint geometry ({layers} layers, dim {dim}) does not "
            f"match the catalogue figures for {info.model_id} "
            f"({info.layer_count} layers, dim {info.dim})"
        )


def strip_weight_norm(model: torch.nn.Module) -> None:
    """Fold weight-norm parametrizations; they do not trace to ONNX."""
    from torch.nn.utils import parametrize

    for module in model.modules():
        params = getattr(module, "parametrizations", None)
        if params is not None and "weight" in params:
            parametrize.remove_parametrizations(module, "weight")
        elif hasattr(module, "weight_g"):
            torch.nn.utils.remove_weight_norm(module)


def write_metadata(onnx_path: Path, model_id: str, layer_count: int,
                   dim: int) -> None:
    import onnx

    model = onnx.load(str(onnx_path))
    del model.metadata_props[:]
    values = {
        "model_id": model_id,
        "layer_count": str(layer_count),
        "dim": str(dim),
        "dims": json.dumps({k: dim for k in range(layer_count + 1)}),
    }
    for key, value in values.items():
        prop = model.metadata_props.add()
        prop.key = key
        prop.value = value
    onnx.save(model, str(onnx_path))


def export_encoder(spec: ExportSpec) -> dict:
    """Convert and return a summary dict (model_id, layer_count, dim, path)."""
    model, info = load_checkpoint(spec.checkpoint)
    if info is not None:
        check_against_catalogue(model, info)
    layer_count, dim = geometry_of(model)
    model_id = spec.model_id or (info.model_id if info is not None
                                 else Path(spec.checkpoint).name)

    strip_weight_norm(model)
    wrapper = HiddenStateStacker(model).eval()
    example = torch.zeros(int(16_000 * spec.example_seconds),
                          dtype=torch.float32)

    out_path = Path(spec.output_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with torch.no_grad():
        torch.onnx.export(
            wrapper,
            (example,),
            str(out_path),
            input_names=["waveform"],
            output_names=["hidden_states"],
            dynamic_axes={"waveform": {0: "n_samples"},
                          "hidden_states": {1: "frames"}},
            opset_version=spec.opset,
            do_constant_folding=True,
            dynamo=False,
        )
    write_metadata(out_path, model_id, layer_count, dim)
    return {
        "model_id": model_id,
        "checkpoint": spec.checkpoint,
        "layer_count": layer_count,
        "dim": dim,
        "opset": spec.opset,
        "path": str(out_path),
    }
