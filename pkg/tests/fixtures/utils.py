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
"""Utils for Fixture handling"""

from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from continuous_vocoder.signal.models import Waveform

BASE_DIR = Path(__file__).parent.resolve()
TEST_DATA_DIR = BASE_DIR / "test_data"

SAMPLE_RATE = 16000


def sawtooth(f0: float, duration: float = 1.0, sample_rate: int = SAMPLE_RATE) -> Waveform:
    """A band-limited-enough sawtooth at a fixed pitch."""
    t = np.arange(int(duration * sample_rate)) / sample_rate
    phase = np.mod(f0 * t, 1.0)
    return Waveform(0.5 * (2.0 * phase - 1.0), sample_rate)


def white_noise(duration: float = 1.0, sample_rate: int = SAMPLE_RATE, seed: int = 0) -> Waveform:
    """Gaussian noise scaled to stay inside [-1, 1]."""
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal(int(duration * sample_rate))
    return Waveform(0.3 * samples / np.max(np.abs(samples)), sample_rate)


def harmonic_plus_noise(
    f0: float,
    cutoff: float,
    duration: float = 1.0,
    sample_rate: int = SAMPLE_RATE,
    seed: int = 0,
    noise_level: float = 0.01,
) -> Waveform:
    """Equal-amplitude harmonics below `cutoff` and high-passed noise above it."""
    t = np.arange(int(duration * sample_rate)) / sample_rate
    harmonics = np.arange(1, int(cutoff // f0) + 1)
    voiced = np.sum(np.cos(2.0 * np.pi * f0 * np.outer(harmonics, t)), axis=0) / len(harmonics)
    rng = np.random.default_rng(seed)
    sos = butter(8, cutoff, btype="highpass", fs=sample_rate, output="sos")
    noise = sosfilt(sos, rng.standard_normal(t.shape[0]))
    noise *= noise_level / np.std(noise)
    samples = 0.5 * voiced + noise
    return Waveform(0.8 * samples / np.max(np.abs(samples)), sample_rate)


def pulse_train(period: int, n_samples: int, first: int = 80) -> np.ndarray:
    """Negative unit impulses every `period` samples starting at `first`."""
    samples = np.zeros(n_samples)
    samples[first::period] = -1.0
    return samples
