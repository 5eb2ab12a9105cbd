# Copyright 2021 - 2022 Universität Tübingen, DKFZ and EMBL
# for the German Human Genome-Phenome Archive (GHGA)
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Waveform and frame-grid types shared by every analysis stage"""

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_HOP_MS = 5.0


@dataclass(frozen=True)
class Waveform:
    """Mono signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"a waveform is one-dimensional, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self) / self.sample_rate

    def scaled(self, factor: float) -> "Waveform":
        """Return a copy with every sample multiplied by `factor`."""
        return Waveform(self.samples * factor, self.sample_rate)


def hop_for_rate(sample_rate: int, hop_ms: float = DEFAULT_HOP_MS) -> int:
    """Frame shift in samples (80 at 16 kHz)."""
    return int(round(hop_ms * 1e-3 * sample_rate))


@dataclass(frozen=True)
class FrameGrid:
    """
    The frame clock: frame m is centered on sample m * hop.

    Args:
        hop: samples per frame shift
        frame_len: samples per analysis window
        n_frames: number of frames
        sample_rate: rate the grid counts samples at
    """

    hop: int
    frame_len: int
    n_frames: int
    sample_rate: int = DEFAULT_SAMPLE_RATE

    @property
    def hop_seconds(self) -> float:
        """Frame shift in seconds."""
        return self.hop / self.sample_rate

    def frame_times(self) -> np.ndarray:
        """Center time of every frame in seconds."""
        return np.arange(self.n_frames) * self.hop_seconds

    def n_samples(self) -> int:
        """Samples covered by the grid."""
        return self.n_frames * self.hop

    @staticmethod
    def frames_for(n_samples: int, hop: int) -> int:
        """Number of frames needed to cover `n_samples`."""
        return int(math.ceil(n_samples / hop)) if n_samples > 0 else 0
