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
"""Maximum voiced frequency estimation"""

import logging

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import get_window

from continuous_vocoder.analysis.models import F0Track, MvfTrack
from continuous_vocoder.config import ExcitationConfig
from continuous_vocoder.errors import AnalysisError
from continuous_vocoder.signal.framing import frame_signal
from continuous_vocoder.signal.models import FrameGrid, Waveform

log = logging.getLogger(__name__)


def harmonic_prominence(power: np.ndarray, freq: float, f0: float, bin_hz: float, range_db: float):
    """
    Peak prominence of the harmonic expected near `freq`.

    Returns the located peak frequency and a score in [0, 1]: the peak
    power within +-F0/4 over the mean power within +-F0/8 of the two
    neighbouring inter-harmonic points, in dB, divided by `range_db`.
    """
    last = power.shape[0] - 1
    low = int(np.clip(np.floor((freq - f0 / 4) / bin_hz), 0, last))
    high = int(np.clip(np.ceil((freq + f0 / 4) / bin_hz), 0, last))
    peak_bin = low + int(np.argmax(power[low : high + 1]))
    peak = power[peak_bin]
    valleys = []
    for centre in (freq - f0 / 2, freq + f0 / 2):
        v_low = int(np.clip(np.floor((centre - f0 / 8) / bin_hz), 0, last))
        v_high = int(np.clip(np.ceil((centre + f0 / 8) / bin_hz), 0, last))
        valleys.append(power[v_low : v_high + 1])
    valley = float(np.mean(np.concatenate(valleys)))
    if peak <= 0.0:
        return peak_bin * bin_hz, 0.0
    ratio_db = 10.0 * np.log10(peak / max(valley, peak * 1e-12))
    return peak_bin * bin_hz, float(np.clip(ratio_db / range_db, 0.0, 1.0))


def _frame_mvf(power: np.ndarray, f0: float, bin_hz: float, nyquist: float, cfg: ExcitationConfig) -> float:
    reference = f0
    last_voiced = 0.0
    misses = 0
    harmonic = 1
    while harmonic * reference + reference / 4 <= nyquist:
        expected = harmonic * reference
        peak_freq, score = harmonic_prominence(
            power, expected, reference, bin_hz, cfg.mvf_prominence_range_db
        )
        if score >= cfg.mvf_prominence_threshold:
            last_voiced = peak_freq
            reference = peak_freq / harmonic
            misses = 0
        else:
            misses += 1
            if misses >= cfg.mvf_stop_run:
                return last_voiced
        harmonic += 1
    return nyquist if misses < cfg.mvf_stop_run and last_voiced > 0 else last_voiced


def estimate_mvf(waveform: Waveform, f0: F0Track, cfg: ExcitationConfig = None) -> MvfTrack:
    """
    Estimate the maximum voiced frequency on the F0 track's frame grid.

    Walking up the harmonics of each frame's F0, the MVF is the last
    prominent harmonic before `mvf_stop_run` consecutive weak ones, or
    Nyquist when no such run occurs. Frames without a periodicity anchor
    sit at the floor. The result is clamped to [floor, Nyquist] and
    median-smoothed.
    """
    cfg = cfg or ExcitationConfig()
    fs = waveform.sample_rate
    expected_frames = FrameGrid.frames_for(len(waveform), f0.hop)
    if f0.sample_rate != fs or len(f0) != expected_frames:
        raise AnalysisError(
            f"F0 track ({len(f0)} frames at {f0.sample_rate} Hz) does not match the "
            f"waveform grid ({expected_frames} frames at {fs} Hz)"
        )
    nyquist = fs / 2.0
    grid = FrameGrid(f0.hop, cfg.mvf_fft_len, len(f0), fs)
    window = get_window("hann", cfg.mvf_fft_len)
    power = np.abs(np.fft.rfft(frame_signal(waveform.samples, grid) * window, axis=1)) ** 2
    bin_hz = fs / cfg.mvf_fft_len
    voiced = f0.anchored(cfg.periodicity_gate)

    values = np.full(len(f0), cfg.mvf_floor)
    for index in np.nonzero(voiced)[0]:
        values[index] = _frame_mvf(power[index], f0.values[index], bin_hz, nyquist, cfg)
    values = np.clip(values, cfg.mvf_floor, nyquist)
    values = median_filter(values, size=cfg.mvf_median, mode="nearest")
    log.debug("MVF median %.0f Hz over %d frames", float(np.median(values)), len(values))
    return MvfTrack(values, f0.hop, fs)
