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
"""PCA residual prototype built from pitch-synchronous residual cycles"""

import logging
from typing import Iterable, Tuple

import numpy as np
from scipy.signal import get_window

from continuous_vocoder.analysis.lpc import lp_residual
from continuous_vocoder.analysis.models import F0Track, GciList, ResidualPrototype
from continuous_vocoder.config import ExcitationConfig, SignalConfig
from continuous_vocoder.errors import InsufficientVoicingError
from continuous_vocoder.signal.framing import frame_grid
from continuous_vocoder.signal.models import Waveform

log = logging.getLogger(__name__)


def collect_residual_cycles(
    residual: np.ndarray, gcis: GciList, f0: F0Track, length: int = 512
) -> np.ndarray:
    """
    Two-period segments centered on every GCI, resampled to `length`
    samples and Hann windowed; one row per GCI.
    """
    residual = np.asarray(residual, dtype=np.float64)
    window = get_window("hann", length)
    grid = np.arange(length) / length - 0.5
    source = np.arange(residual.shape[0])
    rows = []
    for gci in gcis.positions:
        frame = min(int(round(gci / f0.hop)), len(f0) - 1)
        period = f0.sample_rate / f0.values[frame]
        positions = gci + 2.0 * period * grid
        rows.append(np.interp(positions, source, residual, left=0.0, right=0.0) * window)
    if not rows:
        return np.zeros((0, length))
    return np.vstack(rows)


def principal_pulse(cycles: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    First principal direction of the (uncentered) cycle matrix.

    Returns the unit-norm pulse, signed so its largest-magnitude sample is
    negative, and the share of energy it explains.
    """
    cycles = np.asarray(cycles, dtype=np.float64)
    _, singular, right = np.linalg.svd(cycles, full_matrices=False)
    total = float(np.sum(singular**2))
    if total == 0.0:
        raise InsufficientVoicingError("residual cycles carry no energy")
    pulse = right[0]
    if pulse[np.argmax(np.abs(pulse))] > 0:
        pulse = -pulse
    return pulse / np.linalg.norm(pulse), float(singular[0] ** 2 / total)


def build_speaker_prototype(
    cycle_sets: Iterable[np.ndarray], min_cycles: int = 10
) -> ResidualPrototype:
    """Pool the cycles of several utterances into one prototype."""
    sets = [cycles for cycles in cycle_sets if cycles.shape[0]]
    count = sum(cycles.shape[0] for cycles in sets)
    if count < min_cycles:
        raise InsufficientVoicingError(
            f"only {count} glottal cycles found, {min_cycles} needed; "
            "supply more voiced speech"
        )
    pulse, share = principal_pulse(np.vstack(sets))
    log.info("prototype from %d cycles explains %.1f%% of their energy", count, 100 * share)
    return ResidualPrototype(pulse, share, count)


def build_residual_prototype(
    waveform: Waveform,
    gcis: GciList,
    f0: F0Track,
    cfg: ExcitationConfig = None,
    signal_cfg: SignalConfig = None,
    residual: np.ndarray = None,
) -> ResidualPrototype:
    """Prototype of a single utterance; needs at least `min_cycles` GCIs."""
    cfg = cfg or ExcitationConfig()
    signal_cfg = signal_cfg or SignalConfig()
    if len(gcis) < cfg.min_cycles:
        raise InsufficientVoicingError(
            f"only {len(gcis)} glottal closures found, {cfg.min_cycles} needed; "
            "supply more voiced speech"
        )
    if residual is None:
        grid = frame_grid(waveform, signal_cfg.window_ms, signal_cfg.hop_ms)
        residual = lp_residual(waveform.samples, grid, cfg.lpc_order, cfg.preemphasis)
    cycles = collect_residual_cycles(residual, gcis, f0, cfg.prototype_length)
    return build_speaker_prototype([cycles], cfg.min_cycles)
