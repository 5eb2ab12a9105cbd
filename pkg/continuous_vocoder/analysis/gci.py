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
"""Glottal closure instant detection on the LP residual"""

import logging

import numpy as np

from continuous_vocoder.analysis.lpc import lp_residual
from continuous_vocoder.analysis.models import F0Track, GciList
from continuous_vocoder.config import ExcitationConfig, SignalConfig
from continuous_vocoder.signal.framing import frame_grid
from continuous_vocoder.signal.models import Waveform

log = logging.getLogger(__name__)


def _voiced_regions(voiced: np.ndarray, hop: int, n_samples: int):
    """Sample spans of the runs of anchored frames."""
    edges = np.diff(np.concatenate([[0], voiced.astype(np.int8), [0]]))
    starts = np.nonzero(edges == 1)[0]
    stops = np.nonzero(edges == -1)[0]
    for first, last in zip(starts, stops):
        begin = max(first * hop - hop // 2, 0)
        end = min((last - 1) * hop + (hop + 1) // 2, n_samples)
        if last == voiced.shape[0]:
            end = n_samples
        if end > begin:
            yield begin, end


def find_gcis(residual: np.ndarray, f0: F0Track, gate: float = 0.45) -> GciList:
    """
    Walk each voiced region one period at a time, placing a closure at
    the most negative residual sample of every expected period window.

    A window without a negative minimum ends the current run; the next
    closure opens a new one.
    """
    fs = f0.sample_rate
    n_samples = residual.shape[0]
    last_frame = len(f0) - 1

    def period_at(position: int) -> float:
        frame = min(int(round(position / f0.hop)), last_frame)
        return fs / f0.values[frame]

    instants = []
    run_starts = []
    for begin, end in _voiced_regions(f0.anchored(gate), f0.hop, n_samples):
        period = period_at(begin)
        window_stop = min(begin + int(np.ceil(period)), end)
        candidate = begin + int(np.argmin(residual[begin:window_stop]))
        in_run = False
        while True:
            if residual[candidate] < 0.0 and (not instants or candidate > instants[-1]):
                if not in_run:
                    run_starts.append(len(instants))
                instants.append(candidate)
                in_run = True
            else:
                in_run = False
            period = period_at(candidate)
            low = candidate + int(np.ceil(0.5 * period))
            high = min(candidate + int(np.ceil(1.5 * period)), end)
            if low >= high:
                break
            candidate = low + int(np.argmin(residual[low:high]))
    return GciList(
        np.asarray(instants, dtype=np.int64), fs, np.asarray(run_starts, dtype=np.int64)
    )


def detect_gci(
    waveform: Waveform,
    f0: F0Track,
    cfg: ExcitationConfig = None,
    signal_cfg: SignalConfig = None,
    residual: np.ndarray = None,
) -> GciList:
    """
    Detect glottal closure instants in the anchored regions of `f0`.

    `residual` may be passed when the LP residual was already computed.
    """
    cfg = cfg or ExcitationConfig()
    signal_cfg = signal_cfg or SignalConfig()
    if residual is None:
        grid = frame_grid(waveform, signal_cfg.window_ms, signal_cfg.hop_ms)
        residual = lp_residual(waveform.samples, grid, cfg.lpc_order, cfg.preemphasis)
    gcis = find_gcis(residual, f0, cfg.periodicity_gate)
    gcis.check_spacing(cfg.f0_floor, cfg.f0_ceil)
    log.debug("found %d glottal closure instants", len(gcis))
    return gcis
