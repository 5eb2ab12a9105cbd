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
"""Analysis front end and waveform synthesis of the continuous vocoder"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.signal import get_window

from continuous_vocoder.analysis.f0 import track_f0_continuous
from continuous_vocoder.analysis.gci import detect_gci
from continuous_vocoder.analysis.lpc import lp_residual
from continuous_vocoder.analysis.mgc import mgc_analyze, mgc_envelopes
from continuous_vocoder.analysis.models import GciList, ResidualPrototype
from continuous_vocoder.analysis.mvf import estimate_mvf
from continuous_vocoder.analysis.residual import (
    build_residual_prototype,
    build_speaker_prototype,
    collect_residual_cycles,
)
from continuous_vocoder.config import ProjectConfig, SynthesisConfig
from continuous_vocoder.errors import AnalysisError, InsufficientVoicingError
from continuous_vocoder.signal.framing import frame_grid
from continuous_vocoder.signal.models import Waveform
from continuous_vocoder.signal.resampling import resample
from continuous_vocoder.streams import ParamTrack
from continuous_vocoder.synthesis.excitation import (
    build_noise_excitation,
    build_voiced_excitation,
    excitation_level,
    low_pass_voiced,
)

log = logging.getLogger(__name__)

MIN_COPY_SYNTHESIS_SECONDS = 0.5


@dataclass(frozen=True)
class AnalysisResult:
    """Everything analysis yields for one utterance."""

    waveform: Waveform
    params: ParamTrack
    gcis: GciList
    cycles: np.ndarray
    prototype: Optional[ResidualPrototype] = None


def analyze(
    waveform: Waveform, config: ProjectConfig = None, build_prototype: bool = True
) -> AnalysisResult:
    """
    Resample to the working rate and extract F0, MVF, MGC, GCIs and the
    residual cycles; with `build_prototype` the utterance's own prototype
    is built as well (None when it has too little voicing).
    """
    config = config or ProjectConfig()
    waveform = resample(waveform, config.signal.sample_rate)
    grid = frame_grid(waveform, config.signal.window_ms, config.signal.hop_ms)
    f0 = track_f0_continuous(waveform, config.excitation, config.signal)
    mvf = estimate_mvf(waveform, f0, config.excitation)
    spectral = config.spectral
    mgc = mgc_analyze(waveform, grid, spectral.alpha, spectral.gamma, spectral.order, spectral)
    residual = lp_residual(
        waveform.samples, grid, config.excitation.lpc_order, config.excitation.preemphasis
    )
    gcis = detect_gci(waveform, f0, config.excitation, config.signal, residual=residual)
    cycles = collect_residual_cycles(residual, gcis, f0, config.excitation.prototype_length)
    prototype = None
    if build_prototype:
        try:
            prototype = build_residual_prototype(
                waveform, gcis, f0, config.excitation, config.signal, residual=residual
            )
        except InsufficientVoicingError as error:
            log.warning("no utterance prototype: %s", error)
    return AnalysisResult(waveform, ParamTrack(f0, mvf, mgc), gcis, cycles, prototype)


def envelope_filter(
    excitation: np.ndarray, envelopes: np.ndarray, hop: int, fft_len: int
) -> np.ndarray:
    """
    Zero-phase frequency-domain filtering by per-frame amplitude
    envelopes, with Hann-windowed overlap-add at the frame hop.
    """
    n_frames = envelopes.shape[0]
    n_samples = excitation.shape[0]
    span = 2 * hop
    offset = (fft_len - span) // 2
    window = get_window("hann", span)
    padded = np.concatenate([np.zeros(hop), excitation, np.zeros(2 * hop)])
    output = np.zeros(n_samples + 2 * fft_len)
    buffer = np.zeros(fft_len)
    for frame in range(n_frames + 1):
        start = frame * hop - hop
        segment = padded[start + hop : start + hop + span]
        if segment.shape[0] < span or not segment.any():
            continue
        buffer[:] = 0.0
        buffer[offset : offset + span] = segment * window
        shaped = np.fft.irfft(np.fft.rfft(buffer) * envelopes[min(frame, n_frames - 1)], fft_len)
        at = start - offset + fft_len
        output[at : at + fft_len] += shaped
    return output[fft_len : fft_len + n_samples]


def synthesize(
    params: ParamTrack,
    prototype: ResidualPrototype,
    cfg: SynthesisConfig = None,
    mvf_floor: float = 800.0,
    seed: int = None,
) -> Waveform:
    """
    Render a waveform of n_frames * hop samples from a parameter track.

    Pulses below and noise above the MVF form the excitation, which is
    then shaped by the MGC envelopes frame by frame. The noise is scaled
    to the local power of the unit-energy pulse train.
    """
    cfg = cfg or SynthesisConfig()
    if cfg.fft_len < 2 * params.hop:
        raise AnalysisError(f"fft_len {cfg.fft_len} is shorter than two hops")
    n_samples = params.n_frames * params.hop
    fs = params.sample_rate
    voiced = build_voiced_excitation(params.f0, prototype, n_samples, fs, cfg.excitation_norm)
    voiced = low_pass_voiced(voiced, params.mvf, cfg)
    noise = build_noise_excitation(params.mvf, n_samples, cfg, seed, mvf_floor)
    noise = noise.samples * excitation_level(params.f0, n_samples, fs)
    envelopes = mgc_envelopes(params.mgc, cfg.fft_len)
    samples = envelope_filter(voiced.samples + noise, envelopes, params.hop, cfg.fft_len)
    return Waveform(np.nan_to_num(samples), fs)


def copy_synthesis(
    waveform: Waveform, config: ProjectConfig = None, seed: int = None
) -> Tuple[Waveform, ParamTrack]:
    """Analyze an utterance and resynthesize it from its own parameters."""
    config = config or ProjectConfig()
    if waveform.duration < MIN_COPY_SYNTHESIS_SECONDS:
        raise AnalysisError(
            f"copy synthesis needs at least {MIN_COPY_SYNTHESIS_SECONDS} s, "
            f"got {waveform.duration:.3f} s"
        )
    result = analyze(waveform, config, build_prototype=False)
    prototype = build_speaker_prototype([result.cycles], config.excitation.min_cycles)
    output = synthesize(
        result.params, prototype, config.synthesis, config.excitation.mvf_floor, seed
    )
    return output, result.params
