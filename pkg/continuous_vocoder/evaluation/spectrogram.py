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
"""Spectrogram rasters with an optional MVF contour"""

import io
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
from matplotlib import colormaps  # noqa: E402
from matplotlib import pyplot as plt  # noqa: E402
from scipy.signal import stft  # noqa: E402

from continuous_vocoder.analysis.models import MvfTrack  # noqa: E402
from continuous_vocoder.config import SpectrogramConfig  # noqa: E402
from continuous_vocoder.fileio import atomic_write  # noqa: E402
from continuous_vocoder.signal.models import Waveform, hop_for_rate  # noqa: E402

log = logging.getLogger(__name__)

OVERLAY_COLOR = (1.0, 0.0, 0.0, 1.0)


def spectrogram_matrix(
    waveform: Waveform, cfg: SpectrogramConfig = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Log-magnitude STFT in dB, clipped to the top `dynamic_range_db`.

    Returns the (fft_len / 2 + 1, n_columns) matrix, the bin frequencies
    and the column times.
    """
    cfg = cfg or SpectrogramConfig()
    if len(waveform) == 0:
        raise ValueError("cannot render the spectrogram of an empty waveform")
    hop = hop_for_rate(waveform.sample_rate, cfg.hop_ms)
    freqs, times, spectrum = stft(
        waveform.samples,
        fs=waveform.sample_rate,
        window="hann",
        nperseg=cfg.fft_len,
        noverlap=cfg.fft_len - hop,
        boundary="zeros",
        padded=True,
    )
    decibels = 20.0 * np.log10(np.abs(spectrum) + 1e-12)
    ceiling = float(np.max(decibels))
    return np.maximum(decibels, ceiling - cfg.dynamic_range_db), freqs, times


def spectrogram_image(
    waveform: Waveform, cfg: SpectrogramConfig = None, overlay: Optional[MvfTrack] = None
) -> np.ndarray:
    """RGBA raster: time on x, 0..Nyquist bottom to top, zoomed."""
    cfg = cfg or SpectrogramConfig()
    decibels, freqs, times = spectrogram_matrix(waveform, cfg)
    floor = float(np.min(decibels))
    span = max(float(np.max(decibels)) - floor, 1e-12)
    image = colormaps[cfg.colormap]((decibels - floor) / span)
    if overlay is not None:
        bin_hz = freqs[1] - freqs[0]
        frames = np.clip(
            np.rint(times * overlay.sample_rate / overlay.hop).astype(int), 0, len(overlay) - 1
        )
        rows = np.clip(np.rint(overlay.values[frames] / bin_hz).astype(int), 0, freqs.shape[0] - 1)
        for column, row in enumerate(rows):
            previous = rows[column - 1] if column else row
            low, high = sorted((previous, row))
            image[low : high + 1, column] = OVERLAY_COLOR
    image = image[::-1]
    return np.repeat(np.repeat(image, cfg.zoom, axis=0), cfg.zoom, axis=1)


def render_spectrogram(
    waveform: Waveform,
    path: Union[str, Path],
    cfg: SpectrogramConfig = None,
    overlay: Optional[MvfTrack] = None,
) -> Tuple[int, int]:
    """Write the spectrogram PNG; returns its (width, height) in pixels."""
    image = spectrogram_image(waveform, cfg, overlay)
    buffer = io.BytesIO()
    plt.imsave(buffer, image, format="png")
    atomic_write(path, buffer.getvalue())
    log.debug("wrote %dx%d spectrogram to %s", image.shape[1], image.shape[0], path)
    return image.shape[1], image.shape[0]
