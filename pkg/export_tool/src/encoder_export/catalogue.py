"""Known public checkpoints and their expected geometry.

layer_count counts transformer blocks; exports expose layer_count + 1
hidden states (index 0 is the convolutional front-end projection).
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CheckpointInfo:
    model_id: str
    hub_id: str
    layer_count: int
    dim: int


CATALOGUE: dict[str, CheckpointInfo] = {
    "wavlm-base": CheckpointInfo("wavlm-base", "microsoft/wavlm-base", 12, 768),
    "wavlm-base-plus": CheckpointInfo(
        "wavlm-base-plus", "microsoft/wavlm-base-plus", 12, 768),
    "wavlm-large": CheckpointInfo(
        "wavlm-large", "microsoft/wavlm-large", 24, 1024),
    "hubert-base": CheckpointInfo(
        "hubert-base", "facebook/hubert-base-ls960", 12, 768),
    "hubert-large": CheckpointInfo(
        "hubert-large", "facebook/hubert-large-ll60k", 24, 1024),
    "hubert-xlarge": CheckpointInfo(
        "hubert-xlarge", "facebook/hubert-xlarge-ll60k", 48, 1280),
    "wav2vec2-base-960h": CheckpointInfo(
        "wav2vec2-base-960h", "facebook/wav2vec2-base-960h", 12, 768),
    "wav2vec2-large-960h": CheckpointInfo(
        "wav2vec2-large-960h", "facebook/wav2vec2-large-960h", 24, 1024),
    # "Large+ST": the self-trained LV-60k checkpoint
    "wav2vec2-large-960h-lv60-self": CheckpointInfo(
        "wav2vec2-large-960h-lv60-self",
        "facebook/wav2vec2-large-960h-lv60-self", 24, 1024),
}


def resolve_checkpoint(checkpoint: str) -> tuple[str, CheckpointInfo | None]:
    """Map a catalogue key to its hub id; pass through paths and hub ids."""
    info = CATALOGUE.get(checkpoint)
    if info is not None:
        return info.hub_id, info
    return checkpoint, None
