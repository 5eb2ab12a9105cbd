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
"""Test LP residuals, glottal closure instants and the residual prototype"""

import numpy as np
import pytest
from scipy.signal import lfilter

from continuous_vocoder.analysis.f0 import track_f0_continuous
from continuous_vocoder.analysis.gci import detect_gci, find_gcis
from continuous_vocoder.analysis.lpc import lp_residual, lpc_coefficients
from continuous_vocoder.analysis.models import F0Track, GciList
from continuous_vocoder.analysis.residual import (
    build_residual_prototype,
    build_speaker_prototype,
    collect_residual_cycles,
    principal_pulse,
)
from continuous_vocoder.corpus.synthetic import synthetic_vowel
from continuous_vocoder.errors import InsufficientVoicingError
from continuous_vocoder.signal.framing import frame_grid
from tests.fixtures.utils import pulse_train, white_noise


def _flat_track(f0=100.0, n_frames=200, periodicity=1.0):
    return F0Track(np.full(n_frames, f0), 80, 16000, np.full(n_frames, periodicity))


def test_lpc_recovers_ar_process():
    """Test that the predictor of an AR(2) process is recovered"""

    rng = np.random.default_rng(0)
    signal = lfilter([1.0], [1.0, -1.5, 0.7], rng.standard_normal(20000))
    polynomial = lpc_coefficients(signal[None, :], 2)[0]
    assert np.allclose(polynomial, [1.0, -1.5, 0.7], atol=0.03)


def test_lpc_of_silence_is_identity():
    """Test that silent frames get the identity inverse filter"""

    polynomials = lpc_coefficients(np.zeros((3, 400)), 24)
    assert np.all(polynomials[:, 0] == 1.0)
    assert np.all(polynomials[:, 1:] == 0.0)


def test_residual_covers_signal():
    """Test that the residual has one sample per input sample"""

    waveform = synthetic_vowel(0.3, 120.0)
    grid = frame_grid(waveform)
    residual = lp_residual(waveform.samples, grid)
    assert residual.shape == waveform.samples.shape
    assert np.all(np.isfinite(residual))
    assert np.any(residual[-40:] != 0.0)


def test_gcis_on_impulse_train():
    """Test that every impulse of a regular train is a closure instant"""

    residual = pulse_train(160, 16000, first=80)
    gcis = find_gcis(residual, _flat_track())
    assert np.array_equal(gcis.positions, 80 + 160 * np.arange(100))


def test_no_gcis_without_anchors():
    """Test that unanchored frames yield no closure instants"""

    residual = pulse_train(160, 16000)
    assert len(find_gcis(residual, _flat_track(periodicity=0.0))) == 0


def test_gcis_follow_vowel_pitch():
    """Test that closures on a synthetic vowel are one period apart"""

    waveform = synthetic_vowel(0.5, 125.0)
    f0 = track_f0_continuous(waveform)
    gcis = detect_gci(waveform, f0)
    spacing = np.diff(gcis.positions)
    assert len(gcis) > 40
    assert np.median(spacing) == pytest.approx(128, abs=2)


def test_white_noise_has_almost_no_closures():
    """Test that white noise yields at most two closure instants per second"""

    noise = white_noise(duration=2.0, seed=4)
    gcis = detect_gci(noise, track_f0_continuous(noise))
    assert len(gcis) <= 2 * 2.0


def test_closure_runs_break_at_unvoiced_frames():
    """Test that an unanchored stretch splits the closures into two runs"""

    periodicity = np.ones(200)
    periodicity[80:120] = 0.0
    track = F0Track(np.full(200, 100.0), 80, 16000, periodicity)
    gcis = find_gcis(pulse_train(160, 16000, first=80), track)
    assert len(gcis) == 80
    assert np.array_equal(gcis.run_starts, [0, 40])
    assert np.all(gcis.gaps_within_runs() == 160)
    gcis.check_spacing(60.0, 400.0)
    with pytest.raises(ValueError):
        GciList(gcis.positions, 16000).check_spacing(60.0, 400.0)


@pytest.mark.parametrize("run_starts", [[1], [0, 5], []])
def test_run_starts_are_validated(run_starts):
    """Test that runs must open at the first instant and index existing ones"""

    with pytest.raises(ValueError):
        GciList(np.array([10, 200, 390]), 16000, np.array(run_starts, dtype=np.int64))


def test_cycles_are_centered_on_closures():
    """Test that each cycle row holds its closure at the center"""

    residual = pulse_train(160, 16000, first=80)
    gcis = find_gcis(residual, _flat_track())
    cycles = collect_residual_cycles(residual, gcis, _flat_track(), length=512)
    assert cycles.shape == (100, 512)
    assert np.allclose(cycles[1:-1, 256], -1.0)
    assert np.all(np.argmin(cycles, axis=1) == 256)


@pytest.mark.parametrize("seed", range(20))
def test_principal_pulse_matches_eigenvector(seed):
    """Test the pulse against a dense eigendecomposition"""

    rng = np.random.default_rng(seed)
    cycles = rng.standard_normal((40, 64)) + np.linspace(-2, 2, 64)
    pulse, share = principal_pulse(cycles)
    eigenvalues, eigenvectors = np.linalg.eigh(cycles.T @ cycles)
    assert abs(float(pulse @ eigenvectors[:, -1])) >= 1.0 - 1e-6
    assert share == pytest.approx(eigenvalues[-1] / eigenvalues.sum())
    assert pulse[np.argmax(np.abs(pulse))] < 0.0


def test_prototype_needs_enough_cycles():
    """Test that too few cycles raise InsufficientVoicingError"""

    with pytest.raises(InsufficientVoicingError):
        build_speaker_prototype([np.ones((3, 16)), np.zeros((0, 16))], min_cycles=10)


def test_speaker_prototype_pools_utterances():
    """Test that cycles of several utterances are pooled"""

    rng = np.random.default_rng(1)
    shape = -np.hanning(32)
    sets = [shape * rng.uniform(0.5, 1.5, (n, 1)) for n in (4, 5, 6)]
    prototype = build_speaker_prototype(sets, min_cycles=10)
    assert prototype.source_cycle_count == 15
    assert prototype.energy_share == pytest.approx(1.0)
    assert np.allclose(prototype.pulse, shape / np.linalg.norm(shape))


def test_utterance_prototype_from_vowel():
    """Test the single-utterance prototype of a synthetic vowel"""

    waveform = synthetic_vowel(0.6, 110.0)
    f0 = track_f0_continuous(waveform)
    gcis = detect_gci(waveform, f0)
    prototype = build_residual_prototype(waveform, gcis, f0)
    assert len(prototype) == 512
    assert np.linalg.norm(prototype.pulse) == pytest.approx(1.0)
    assert 0.0 < prototype.energy_share <= 1.0
