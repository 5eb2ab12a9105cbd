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
"""Band-limited rational-ratio resampling"""

import logging
from math import gcd

import numpy as np
from scipy import signal as sps

from continuous_vocoder.signal.models import Waveform

log = logging.getLogger(__name__)

TAPS_PER_PHASE = 64
KAISER_BETA = 8.0


def resample(waveform: Waveform, target_rate: int) -> Waveform:
    """
    Resample to `target_rate` with a polyphase Kaiser-windowed sinc filter.

    The output holds ceil(len * target / source) samples.
    """
    if target_rate <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate}")
    source_rate = waveform.sample_rate
    if source_rate == target_rate:
        return waveform
    divisor = gcd(source_rate, target_rate)
    up, down = target_rate // divisor, source_rate // divisor
    max_rate = max(up, down)
    half_len = TAPS_PER_PHASE // 2 * max_rate
    taps = sps.firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    samples = sps.resample_poly(waveform.samples, up, down, window=taps)
    log.debug("resampled %d Hz -> %d Hz (%d/%d)", source_rate, target_rate, up, down)
    return Waveform(np.asarray(samples, dtype=np.float64), target_rate)
