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
"""Frame-wise linear prediction and inverse filtering"""

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.signal import get_window, lfilter

from continuous_vocoder.signal.framing import frame_signal
from continuous_vocoder.signal.models import FrameGrid


def lpc_coefficients(frames: np.ndarray, order: int) -> np.ndarray:
    """
    Autocorrelation-method LPC of every row of `frames`.

    Returns inverse-filter polynomials [1, a1, ..., a_order]; silent rows
    get the identity filter.
    """
    length = frames.shape[1]
    autocorrelation = np.stack(
        [np.einsum("ij,ij->i", frames[:, : length - lag], frames[:, lag:]) for lag in range(order + 1)],
        axis=1,
    )
    polynomials = np.zeros((frames.shape[0], order + 1))
    polynomials[:, 0] = 1.0
    for index, row in enumerate(autocorrelation):
        if row[0] <= 1e-12:
            continue
        column = row[:order].copy()
        column[0] *= 1.0 + 1e-9
        try:
            predictor = solve_toeplitz(column, row[1:])
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(predictor)):
            polynomials[index, 1:] = -predictor
    return polynomials


def lp_residual(
    samples: np.ndarray, grid: FrameGrid, order: int = 24, preemphasis: float = 0.97
) -> np.ndarray:
    """
    Residual of frame-wise LP inverse filtering.

    Each frame's Hann-windowed, pre-emphasized analysis window gives a
    predictor that inverse-filters the hop-long block around the frame
    center.
    """
    samples = np.asarray(samples, dtype=np.float64)
    emphasized = lfilter([1.0, -preemphasis], [1.0], samples)
    window = get_window("hann", grid.frame_len)
    polynomials = lpc_coefficients(frame_signal(emphasized, grid) * window, order)

    padded = np.concatenate([np.zeros(order + grid.hop), emphasized, np.zeros(grid.hop)])
    offset = order + grid.hop
    residual = np.zeros(samples.shape[0])
    for index, polynomial in enumerate(polynomials):
        start = max(index * grid.hop - grid.hop // 2, 0)
        stop = index * grid.hop + (grid.hop + 1) // 2
        if index == len(polynomials) - 1:
            stop = samples.shape[0]
        stop = min(stop, samples.shape[0])
        if stop <= start:
            continue
        block = padded[offset + start - order : offset + stop]
        residual[start:stop] = np.convolve(block, polynomial, mode="valid")
    return residual
