"""Segment grid shared by all feature extractors.

Every backend in this project emits one feature vector per 25 ms window of
16 kHz audio, advanced by a 20 ms stride (400 / 320 samples). Consecutive
windows therefore overlap by 80 samples. Trailing samples shorter than one
window are dropped, never padded.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError

SAMPLE_RATE_HZ = 16_000


@dataclass(frozen=True)
class FrameSpec:
    """Window/stride of the segment grid, in samples at 16 kHz."""

    window_samples: int = 400
    stride_samples: int = 320

    def __post_init__(self) -> None:
        if self.window_samples <= 0 or self.stride_samples <= 0:
            raise InputError("window and stride must be positive")
        if self.window_samples < self.stride_samples:
            raise InputError("window must be at least one stride long")


DEFAULT_FRAME_SPEC = FrameSpec()


def frame_count(n_samples: int, spec: FrameSpec = DEFAULT_FRAME_SPEC) -> int:
    """Number of full windows that fit in a clip of ``n_samples`` samples."""
    if n_samples < 0:
        raise InputError("n_samples must be non-negative")
    if n_samples < spec.window_samples:
        return 0
    return (n_samples - spec.window_samples) // spec.stride_samples + 1


def frame_bounds(index: int, spec: FrameSpec = DEFAULT_FRAME_SPEC) -> tuple[int, int]:
    """[start, end) sample range of frame ``index`` on the grid."""
    if index < 0:
        raise InputError(f"frame index must be non-negative, got {index}")
    start = index * spec.stride_samples
    return start, start + spec.window_samples
