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
"""Test the analysis front end and waveform synthesis"""

import time

import numpy as np
import pytest
from scipy.signal import get_window

from continuous_vocoder.analysis.models import F0Track, MgcTrack, MvfTrack, ResidualPrototype
from continuous_vocoder.config import ProjectConfig
from continuous_vocoder.corpus.synthetic import synthetic_vowel
from continuous_vocoder.errors import AnalysisError
from continuous_vocoder.signal.models import Waveform
from continuous_vocoder.streams import ParamTrack
from continuous_vocoder.synthesis.vocoder import (
    analyze,
    copy_synthesis,
    envelope_filter,
    synthesize,
)


def _params(n_frames=60, f0=120.0, mvf=4000.0):
    return ParamTrack(
        F0Track(np.full(n_frames, f0)),
        MvfTrack(np.full(n_frames, mvf)),
        MgcTrack(np.zeros((n_frames, 25))),
    )


def _prototype():
    return ResidualPrototype(-np.hanning(512) ** 8)


def _glottal_prototype():
    offset = np.arange(512) - 256.0
    return ResidualPrototype(offset * np.exp(-0.5 * (offset / 4.0) ** 2))


def _impulse_prototype():
    pulse = np.zeros(512)
    pulse[256] = -1.0
    return ResidualPrototype(pulse)


def _comb_ratio_db(samples, f0, low, high, sample_rate=16000):
    spectrum = np.abs(np.fft.rfft(samples * get_window("hann", samples.shape[0]))) ** 2
    freqs = np.fft.rfftfreq(samples.shape[0], 1.0 / sample_rate)
    band = (freqs >= low) & (freqs < high)
    offset = np.abs(freqs / f0 - np.round(freqs / f0))
    harmonic = np.mean(spectrum[band & (offset <= 0.25)])
    between = np.mean(spectrum[band & (offset > 0.25)])
    return 10.0 * np.log10(harmonic / between)


@pytest.mark.parametrize("gain", [1.0, 2.5])
def test_flat_envelope_scales_excitation(gain):
    """Test that a flat envelope only scales the excitation"""

    rng = np.random.default_rng(0)
    excitation = rng.standard_normal(4000)
    envelopes = np.full((50, 513), gain)
    output = envelope_filter(excitation, envelopes, 80, 1024)
    assert np.allclose(output, gain * excitation)


def test_synthesis_length_and_determinism():
    """Test that synthesis yields n_frames * hop samples, reproducibly"""

    params = _params()
    first = synthesize(params, _prototype(), seed=4)
    second = synthesize(params, _prototype(), seed=4)
    assert len(first) == 60 * 80
    assert first.sample_rate == 16000
    assert np.all(np.isfinite(first.samples))
    assert np.array_equal(first.samples, second.samples)


def test_synthesized_pitch():
    """Test that the synthesized waveform carries the requested F0"""

    output = synthesize(_params(n_frames=200, f0=125.0, mvf=800.0 + 1.0), _prototype(), seed=0)
    spectrum = np.abs(np.fft.rfft(output.samples))
    freqs = np.fft.rfftfreq(len(output), 1.0 / 16000)
    band = (freqs > 60) & (freqs < 400)
    assert freqs[band][np.argmax(spectrum[band])] == pytest.approx(125.0, abs=2.0)


def test_analysis_result():
    """Test that analysis returns streams on one clock and an utterance prototype"""

    waveform = synthetic_vowel(0.6, 120.0, 140.0)
    result = analyze(waveform)
    assert result.params.n_frames == 120
    assert result.params.mgc.frames.shape == (120, 25)
    assert len(result.gcis) > 30
    assert result.cycles.shape == (len(result.gcis), 512)
    assert result.prototype is not None


def test_analysis_resamples_to_working_rate():
    """Test that input at another rate is analysed at the working rate"""

    waveform = synthetic_vowel(0.6, 120.0, sample_rate=22050)
    result = analyze(waveform, ProjectConfig())
    assert result.waveform.sample_rate == 16000
    assert result.params.sample_rate == 16000
    assert result.params.n_frames == 120


def test_copy_synthesis_keeps_length():
    """Test that copy synthesis preserves the duration within one frame"""

    waveform = synthetic_vowel(0.8, 110.0, 150.0)
    output, params = copy_synthesis(waveform, seed=0)
    assert abs(len(output) - len(waveform)) <= 80
    assert params.n_frames == 160


def test_copy_synthesis_needs_half_a_second():
    """Test that very short input is refused"""

    with pytest.raises(AnalysisError):
        copy_synthesis(Waveform(np.zeros(4000), 16000))


@pytest.mark.parametrize("f0", [60.0, 120.0, 300.0, 400.0])
@pytest.mark.parametrize("prototype", [_prototype(), _glottal_prototype(), _impulse_prototype()])
def test_flat_envelope_output_is_bounded(f0, prototype):
    """Test that a flat envelope keeps the output finite and within +-4"""

    for mvf in (800.0, 5000.0, 8000.0):
        output = synthesize(_params(n_frames=200, f0=f0, mvf=mvf), prototype, seed=2)
        assert np.all(np.isfinite(output.samples))
        assert np.max(np.abs(output.samples)) <= 4.0


def test_harmonics_below_mvf_and_noise_above():
    """Test the comb structure of a 120 Hz track split at 5 kHz"""

    output = synthesize(_params(n_frames=800, f0=120.0, mvf=5000.0), _glottal_prototype(), seed=0)
    samples = output.samples[800:-800]
    assert _comb_ratio_db(samples, 120.0, 200.0, 4000.0) >= 10.0
    assert _comb_ratio_db(samples, 120.0, 5600.0, 7800.0) <= 0.5


def test_unvoiced_track_is_not_periodic():
    """Test that an all-floor MVF track gives a noise-like waveform"""

    output = synthesize(_params(n_frames=200, f0=120.0, mvf=800.0), _glottal_prototype(), seed=1)
    samples = output.samples - np.mean(output.samples)
    correlation = np.correlate(samples, samples, mode="full")[samples.shape[0] - 1 :]
    correlation /= correlation[0]
    assert np.max(np.abs(correlation[16:321])) <= 0.3


def test_energy_is_continuous_across_frames():
    """Test that 2.5 ms RMS on both sides of every frame boundary stays within 6 dB"""

    n_frames = 200
    mgc = np.zeros((n_frames, 25))
    mgc[:, 0] = np.linspace(-0.5, 0.5, n_frames)
    mgc[:, 1] = 0.3 * np.sin(np.linspace(0.0, np.pi, n_frames))
    mgc[:, 2] = np.linspace(0.0, -0.2, n_frames)
    params = ParamTrack(
        F0Track(np.full(n_frames, 400.0)),
        MvfTrack(np.full(n_frames, 8000.0)),
        MgcTrack(mgc),
    )
    samples = synthesize(params, _glottal_prototype(), seed=0).samples
    jumps = []
    for frame in range(5, n_frames - 5):
        boundary = frame * 80 + 40
        before = np.sqrt(np.mean(samples[boundary - 40 : boundary] ** 2))
        after = np.sqrt(np.mean(samples[boundary : boundary + 40] ** 2))
        jumps.append(abs(20.0 * np.log10(after / before)))
    assert max(jumps) <= 6.0


def test_ten_seconds_synthesize_in_real_time():
    """Test that 10 s of speech are rendered in less than 10 s"""

    n_frames = 2000
    ramp = np.linspace(0.0, 1.0, n_frames)
    mgc = np.zeros((n_frames, 25))
    mgc[:, 0] = -1.0 + ramp
    mgc[:, 1] = 0.5 * np.sin(6.0 * np.pi * ramp)
    params = ParamTrack(
        F0Track(100.0 + 100.0 * ramp),
        MvfTrack(2000.0 + 4000.0 * ramp),
        MgcTrack(mgc),
    )
    start = time.perf_counter()
    output = synthesize(params, _glottal_prototype(), seed=0)
    elapsed = time.perf_counter() - start
    assert len(output) == n_frames * 80
    assert elapsed < 10.0
