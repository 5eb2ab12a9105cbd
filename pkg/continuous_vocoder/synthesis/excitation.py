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
"""Mixed excitation: PCA-residual pulses below the MVF, noise above it"""

import logging
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import firwin, get_window, hilbert, kaiser_beta

from continuous_vocoder.analysis.models import F0Track, MvfTrack, ResidualPrototype
from continuous_vocoder.config import SynthesisConfig
from continuous_vocoder.signal.models import Waveform

log = logging.getLogger(__name__)


@lru_cache(maxsize=4096)
def crossover_pair(
    cutoff_hz: float, sample_rate: int, taps: int, attenuation_db: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Complementary linear-phase low/high-pass FIR pair split at `cutoff_hz`.

    The Kaiser window is chosen for `attenuation_db` of stop-band
    attenuation; more attenuation widens the transition band.
    A cutoff at or below 0 passes everything through the high branch; a
    cutoff at or above Nyquist passes everything through the low branch.
    """
    nyquist = sample_rate / 2.0
    impulse = np.zeros(taps)
    impulse[taps // 2] = 1.0
    if cutoff_hz <= 0.0:
        return np.zeros(taps), impulse
    if cutoff_hz >= nyquist:
        return impulse, np.zeros(taps)
    low = firwin(taps, cutoff_hz, window=("kaiser", kaiser_beta(attenuation_db)), fs=sample_rate)
    return low, impulse - low


def time_varying_filter(
    signal: np.ndarray, hop: int, kernel_for_frame: Callable[[int], np.ndarray], n_frames: int
) -> np.ndarray:
    """
    Filter `signal` with a per-frame FIR kernel and overlap-add the
    results under a periodic Hann window of two hops.
    """
    n_samples = signal.shape[0]
    window = get_window("hann", 2 * hop)
    taps = kernel_for_frame(0).shape[0]
    half = taps // 2
    margin = 2 * hop + half
    padded = np.concatenate([np.zeros(margin), signal, np.zeros(margin + 2 * hop)])
    output = np.zeros(n_samples + 4 * hop)
    for frame in range(n_frames + 1):
        kernel = kernel_for_frame(min(frame, n_frames - 1))
        start = frame * hop - hop
        segment = padded[margin + start - half : margin + start + 2 * hop + half]
        if not segment.any() or not kernel.any():
            continue
        filtered = np.convolve(segment, kernel, mode="valid")
        output[start + 2 * hop : start + 4 * hop] += filtered * window
    return output[2 * hop : 2 * hop + n_samples]


def excitation_instants(f0_per_sample: np.ndarray, sample_rate: int) -> np.ndarray:
    """
    Fractional sample positions where the accumulated phase of the
    per-sample F0 crosses an integer; the phase starts at one half.
    """
    phase = 0.5 + np.concatenate([[0.0], np.cumsum(f0_per_sample / sample_rate)])
    cycles = np.arange(1, int(np.ceil(phase[-1])))
    cycles = cycles[cycles < phase[-1]]
    index = np.searchsorted(phase, cycles, side="right") - 1
    return index + (cycles - phase[index]) / (phase[index + 1] - phase[index])


def per_sample_track(values: np.ndarray, hop: int, n_samples: int) -> np.ndarray:
    """Linear interpolation of a frame track onto samples."""
    return np.interp(np.arange(n_samples), np.arange(values.shape[0]) * hop, values)


def build_voiced_excitation(
    f0: F0Track,
    prototype: ResidualPrototype,
    n_samples: int,
    sample_rate: int = None,
    norm: str = "period",
) -> Waveform:
    """
    Pitch-synchronous overlap-add of the prototype pulse.

    The prototype spans two periods of the local F0 around each
    excitation instant and is Hann windowed. With `norm="period"` every
    pulse carries unit energy, so the local power is f0 / sample_rate;
    with `norm="frame"` the summed excitation is scaled to that same
    power frame by frame.
    """
    sample_rate = sample_rate or f0.sample_rate
    if np.any(f0.values <= 0):
        raise ValueError("voiced excitation needs a positive F0 on every frame")
    f0_samples = per_sample_track(f0.values, f0.hop, n_samples)
    length = len(prototype)
    source = np.arange(length)
    output = np.zeros(n_samples)
    for instant in excitation_instants(f0_samples, sample_rate):
        period = sample_rate / f0_samples[min(int(instant), n_samples - 1)]
        positions = np.arange(int(np.ceil(instant - period)), int(np.floor(instant + period)) + 1)
        phase = (positions - instant) / (2.0 * period) + 0.5
        keep = (phase >= 0.0) & (phase < 1.0)
        positions, phase = positions[keep], phase[keep]
        pulse = np.interp(phase * length, source, prototype.pulse)
        pulse *= 0.5 - 0.5 * np.cos(2.0 * np.pi * phase)
        if norm == "period":
            energy = np.sum(pulse**2)
            if energy > 0:
                pulse /= np.sqrt(energy)
        inside = (positions >= 0) & (positions < n_samples)
        output[positions[inside]] += pulse[inside]
    if norm == "frame":
        output = _normalize_frames(output, f0.hop) * np.sqrt(f0_samples / sample_rate)
    return Waveform(output, sample_rate)


def excitation_level(f0: F0Track, n_samples: int, sample_rate: int = None) -> np.ndarray:
    """Per-sample RMS of a pulse train with one unit-energy pulse per period."""
    sample_rate = sample_rate or f0.sample_rate
    return np.sqrt(per_sample_track(f0.values, f0.hop, n_samples) / sample_rate)


def _normalize_frames(samples: np.ndarray, hop: int) -> np.ndarray:
    power = uniform_filter1d(samples**2, size=2 * hop, mode="nearest")
    rms = np.sqrt(np.maximum(power, 1e-12))
    return samples / rms


def _unvoiced_weight(floor_frames: np.ndarray, hop: int, n_samples: int) -> np.ndarray:
    weights = per_sample_track(floor_frames.astype(np.float64), hop, n_samples)
    return np.clip(weights, 0.0, 1.0)


def _triangular_envelope(hop: int, n_samples: int) -> np.ndarray:
    distance = np.abs(((np.arange(n_samples) + hop / 2.0) % hop) - hop / 2.0)
    return np.sqrt(3.0) * (1.0 - distance / (hop / 2.0))


def _amplitude_follow_envelope(noise: np.ndarray, hop: int, mask: np.ndarray) -> np.ndarray:
    envelope = uniform_filter1d(np.abs(hilbert(noise)), size=hop, mode="nearest")
    region = envelope[mask] if mask.any() else envelope
    rms = np.sqrt(np.mean(region**2)) if region.size else 0.0
    return envelope / rms if rms > 0 else np.ones_like(envelope)


def build_noise_excitation(
    mvf: MvfTrack,
    n_samples: int,
    cfg: SynthesisConfig = None,
    seed: int = None,
    mvf_floor: float = 800.0,
) -> Waveform:
    """
    White noise high-passed at each frame's MVF.

    Frames at the MVF floor are unvoiced-dominated: they receive
    full-band noise shaped by the configured time-domain envelope.
    """
    cfg = cfg or SynthesisConfig()
    seed = cfg.noise_seed if seed is None else seed
    fs, hop = mvf.sample_rate, mvf.hop
    white = np.random.default_rng(seed).standard_normal(n_samples)
    floor_frames = mvf.values <= mvf_floor + 1e-6
    cutoffs = np.where(floor_frames, 0.0, mvf.values)

    def high_pass(frame: int) -> np.ndarray:
        return crossover_pair(
            float(round(cutoffs[frame])), fs, cfg.crossover_taps, cfg.crossover_attenuation_db
        )[1]

    noise = time_varying_filter(white, hop, high_pass, len(mvf))
    if floor_frames.any() and cfg.unvoiced_envelope != "none":
        weight = _unvoiced_weight(floor_frames, hop, n_samples)
        if cfg.unvoiced_envelope == "triangular":
            shape = _triangular_envelope(hop, n_samples)
        else:
            shape = _amplitude_follow_envelope(noise, hop, weight > 0.5)
        noise = noise * (1.0 - weight + weight * shape)
    return Waveform(cfg.noise_gain * noise, fs)


def low_pass_voiced(voiced: Waveform, mvf: MvfTrack, cfg: SynthesisConfig = None) -> Waveform:
    """Keep the voiced excitation below each frame's MVF."""
    cfg = cfg or SynthesisConfig()

    def low_pass(frame: int) -> np.ndarray:
        return crossover_pair(
            float(round(mvf.values[frame])),
            mvf.sample_rate,
            cfg.crossover_taps,
            cfg.crossover_attenuation_db,
        )[0]

    samples = time_varying_filter(voiced.samples, mvf.hop, low_pass, len(mvf))
    return Waveform(samples, voiced.sample_rate)
