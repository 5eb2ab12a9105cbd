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
"""Frame grid construction and frame extraction"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from continuous_vocoder.signal.models import (
    DEFAULT_HOP_MS,
    FrameGrid,
    Waveform,
    hop_for_rate,
)

MIN_WINDOW_MS = 5.0


def frame_grid(
    waveform: Waveform, window_ms: float = 25.0, hop_ms: float = DEFAULT_HOP_MS
) -> FrameGrid:
    """Grid of ceil(len / hop) frames, frame m centered on sample m * hop."""
    if window_ms < MIN_WINDOW_MS:
        raise ValueError(
            f"analysis window must be at least {MIN_WINDOW_MS} ms, got {window_ms}"
        )
    hop = hop_for_rate(waveform.sample_rate, hop_ms)
    frame_len = int(round(window_ms * 1e-3 * waveform.sample_rate))
    return FrameGrid(
        hop=hop,
        frame_len=frame_len,
        n_frames=FrameGrid.frames_for(len(waveform), hop),
        sample_rate=waveform.sample_rate,
    )


def frame_signal(
    samples: np.ndarray, grid: FrameGrid, frame_len: int = None
) -> np.ndarray:
    """
    Cut `samples` into a (n_frames, frame_len) matrix of centered frames.

    Samples outside the signal read as zero.
    """
    frame_len = frame_len or grid.frame_len
    half = frame_len // 2
    tail = grid.n_frames * grid.hop + frame_len
    padded = np.concatenate(
        [np.zeros(half), np.asarray(samples, dtype=np.float64), np.zeros(tail)]
    )
    windows = sliding_window_view(padded, frame_len)[:: grid.hop]
    return np.array(windows[: grid.n_frames])
