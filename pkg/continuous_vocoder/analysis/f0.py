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
"""Continuous F0 tracking"""

import logging

import numpy as np
from scipy.ndimage import median_filter, uniform_filter1d

from continuous_vocoder.analysis.models import F0Track
from continuous_vocoder.config import ExcitationConfig, SignalConfig
from continuous_vocoder.errors import AnalysisError
from continuous_vocoder.signal.framing import frame_grid, frame_signal
from continuous_vocoder.signal.models import Waveform

log = logging.getLogger(__name__)

SILENCE_ENERGY = 1e-10


def cumulative_mean_normalized_difference(
    frames: np.ndarray, window: int, max_lag: int
) -> np.ndarray:
    """
    Cumulative-mean-normalized difference of every frame.

    `frames` has window + max_lag columns; row i of the result holds
    d'(tau) for tau = 0..max_lag, with d'(0) = 1.
    """
    n_fft = 1 << int(np.ceil(np.log2(2 * window + max_lag)))
    spectrum = np.fft.rfft(frames, n_fft, axis=1)
    head = np.fft.rfft(frames[:, :window], n_fft, axis=1)
    correlation = np.fft.irfft(spectrum * np.conj(head), n_fft, axis=1)[:, : max_lag + 1]

    squares = np.concatenate(
        [np.zeros((frames.shape[0], 1)), np.cumsum(frames**2, axis=1)], axis=1
    )
    lags = np.arange(max_lag + 1)
    energy_head = squares[:, window][:, None]
    energy_lag = squares[:, lags + window] - squares[:, lags]
    difference = np.maximum(energy_head + energy_lag - 2.0 * correlation, 0.0)
    difference[:, 0] = 0.0

    running = np.cumsum(difference[:, 1:], axis=1)
    normalized = np.ones_like(difference)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = difference[:, 1:] * lags[1:] / running
    normalized[:, 1:] = np.where(running > 0, ratio, 1.0)
    return normalized


def _pick_lag(curve: np.ndarray, min_lag: int, threshold: float) -> float:
    below = np.nonzero(curve[min_lag:] < threshold)[0]
    if below.size:
        lag = min_lag + int(below[0])
        while lag + 1 < curve.shape[0] and curve[lag + 1] < curve[lag]:
            lag += 1
    else:
        lag = min_lag + int(np.argmin(curve[min_lag:]))
    if 0 < lag < curve.shape[0] - 1:
        left, centre, right = curve[lag - 1], curve[lag], curve[lag + 1]
        denominator = left - 2.0 * centre + right
        if denominator > 0:
            return lag + 0.5 * (left - right) / denominator
    return float(lag)


def track_f0_continuous(
    waveform: Waveform,
    cfg: ExcitationConfig = None,
    signal_cfg: SignalConfig = None,
) -> F0Track:
    """
    Track F0 on the 5 ms grid and make it continuous.

    Frames whose periodicity reaches the gate anchor the contour; the
    remaining frames are filled by linear interpolation of log F0 with
    edge extension, then the contour is median and mean smoothed over
    three frames. Without any anchor the contour sits at the geometric
    mean of floor and ceiling.
    """
    cfg = cfg or ExcitationConfig()
    signal_cfg = signal_cfg or SignalConfig()
    grid = frame_grid(waveform, signal_cfg.window_ms, signal_cfg.hop_ms)
    if len(waveform) < grid.frame_len:
        raise AnalysisError(
            f"waveform of {len(waveform)} samples is shorter than one "
            f"{grid.frame_len}-sample analysis window"
        )
    fs = waveform.sample_rate
    min_lag = max(2, int(np.floor(fs / cfg.f0_ceil)))
    max_lag = int(np.ceil(fs / cfg.f0_floor))
    window = max(grid.frame_len, max_lag)
    frames = frame_signal(waveform.samples, grid, window + max_lag)
    curves = cumulative_mean_normalized_difference(frames, window, max_lag)
    energy = np.sum(frames[:, :window] ** 2, axis=1)

    raw = np.empty(grid.n_frames)
    periodicity = np.empty(grid.n_frames)
    for index, curve in enumerate(curves):
        lag = _pick_lag(curve, min_lag, cfg.yin_threshold)
        nearest = int(np.clip(round(lag), min_lag, max_lag))
        raw[index] = fs / max(lag, 1.0)
        periodicity[index] = np.clip(1.0 - curve[nearest], 0.0, 1.0)
    periodicity[energy <= SILENCE_ENERGY * window] = 0.0

    anchored = (
        (periodicity >= cfg.periodicity_gate)
        & (raw >= cfg.f0_floor)
        & (raw <= cfg.f0_ceil)
    )
    if anchored.any():
        positions = np.nonzero(anchored)[0]
        log_f0 = np.interp(
            np.arange(grid.n_frames), positions, np.log(raw[positions])
        )
    else:
        log.info("no periodic frames found; using a flat F0 contour")
        log_f0 = np.full(grid.n_frames, 0.5 * np.log(cfg.f0_floor * cfg.f0_ceil))
    log_f0 = median_filter(log_f0, size=3, mode="nearest")
    log_f0 = uniform_filter1d(log_f0, size=3, mode="nearest")
    values = np.clip(np.exp(log_f0), cfg.f0_floor, cfg.f0_ceil)
    log.debug(
        "tracked %d frames, %d anchored", grid.n_frames, int(np.count_nonzero(anchored))
    )
    return F0Track(values, grid.hop, fs, periodicity)
