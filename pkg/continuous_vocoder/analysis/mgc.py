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
"""Mel-generalized cepstral analysis and envelope reconstruction"""

import logging
from typing import Tuple

import numpy as np
from scipy.signal import get_window

from continuous_vocoder.analysis.models import MgcTrack
from continuous_vocoder.config import SpectralConfig
from continuous_vocoder.signal.framing import frame_signal
from continuous_vocoder.signal.models import FrameGrid, Waveform

log = logging.getLogger(__name__)

CHUNK_FRAMES = 128
MAX_HALVINGS = 8
LOG_AMPLITUDE_LIMIT = 700.0
DOMAIN_EPSILON = 1e-8


def warp_frequency(omega: np.ndarray, alpha: float) -> np.ndarray:
    """Phase response of the first-order all-pass: linear -> warped axis."""
    omega = np.asarray(omega, dtype=np.float64)
    return omega + 2.0 * np.arctan(alpha * np.sin(omega) / (1.0 - alpha * np.cos(omega)))


def unwarp_frequency(warped: np.ndarray, alpha: float) -> np.ndarray:
    """Inverse of warp_frequency."""
    return warp_frequency(warped, -alpha)


def log_amplitude_spectra(frames: np.ndarray, fft_len: int, floor: float) -> np.ndarray:
    """Natural-log amplitude of the Hann-windowed periodogram of every row."""
    window = get_window("hann", frames.shape[1])
    spectrum = np.fft.rfft(frames * window, fft_len, axis=1)
    power = np.abs(spectrum) ** 2 / np.sum(window**2)
    return 0.5 * np.log(np.maximum(power, floor))


def _resample_to_warped(log_amplitude: np.ndarray, alpha: float) -> np.ndarray:
    half = log_amplitude.shape[1] - 1
    warped = np.pi * np.arange(half + 1) / half
    position = unwarp_frequency(warped, alpha) * half / np.pi
    position = np.clip(position, 0.0, float(half))
    lower = np.minimum(np.floor(position).astype(int), half - 1)
    fraction = position - lower
    return log_amplitude[:, lower] * (1.0 - fraction) + log_amplitude[:, lower + 1] * fraction


def _cosine_fit(values: np.ndarray, order: int) -> np.ndarray:
    """c0 + sum c_m cos(m w) fit of samples on a uniform [0, pi] grid."""
    half = values.shape[1] - 1
    cepstrum = np.fft.irfft(values, 2 * half, axis=1)[:, : order + 1]
    cepstrum[:, 1:] *= 2.0
    return cepstrum


def _generalized_log(coefs: np.ndarray, basis: np.ndarray, gamma: float):
    """Model log amplitude and the 1 + gamma * B term on the basis grid."""
    shape = coefs[:, 1:] @ basis.T
    if gamma == 0.0:
        return coefs[:, :1] + shape, np.ones_like(shape)
    domain = 1.0 + gamma * shape
    safe = np.maximum(domain, DOMAIN_EPSILON)
    return coefs[:, :1] + np.log(safe) / gamma, domain


def _initial_solution(target: np.ndarray, order: int, gamma: float, basis: np.ndarray) -> np.ndarray:
    if gamma == 0.0:
        return _cosine_fit(target, order)
    generalized = np.expm1(gamma * target) / gamma
    fitted = _cosine_fit(generalized, order)
    scale = 1.0 + gamma * fitted[:, :1]
    coefs = np.empty_like(fitted)
    coefs[:, 0] = np.log(scale[:, 0]) / gamma
    coefs[:, 1:] = fitted[:, 1:] / scale
    for _ in range(40):
        _, domain = _generalized_log(coefs, basis, gamma)
        invalid = np.min(domain, axis=1) <= DOMAIN_EPSILON
        if not invalid.any():
            break
        coefs[invalid, 1:] *= 0.5
    return coefs


def _objective(coefs, target, basis, weights, gamma) -> np.ndarray:
    model, domain = _generalized_log(coefs, basis, gamma)
    cost = np.sum(weights * (model - target) ** 2, axis=1)
    return np.where(np.min(domain, axis=1) > DOMAIN_EPSILON, cost, np.inf)


def _refine(
    coefs: np.ndarray,
    target: np.ndarray,
    basis: np.ndarray,
    weights: np.ndarray,
    gamma: float,
    max_iter: int,
    tolerance: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Damped Gauss-Newton on the weighted log-spectral least squares fit."""
    coefs = coefs.copy()
    cost = _objective(coefs, target, basis, weights, gamma)
    active = np.isfinite(cost)
    converged = np.zeros(coefs.shape[0], dtype=bool)
    size = coefs.shape[1]
    for _ in range(max_iter):
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        current = coefs[rows]
        model, domain = _generalized_log(current, basis, gamma)
        residual = model - target[rows]
        jacobian = np.empty((rows.size, basis.shape[0], size))
        jacobian[:, :, 0] = 1.0
        jacobian[:, :, 1:] = basis[None, :, :] / domain[:, :, None]
        weighted = jacobian * weights[None, :, None]
        normal = np.einsum("nki,nkj->nij", weighted, jacobian)
        normal += 1e-9 * np.trace(normal, axis1=1, axis2=2)[:, None, None] * np.eye(size)
        gradient = np.einsum("nki,nk->ni", weighted, residual)
        step = -np.linalg.solve(normal, gradient[:, :, None])[:, :, 0]

        accepted = np.zeros(rows.size, dtype=bool)
        new_cost = cost[rows].copy()
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            pending = ~accepted
            trial = current[pending] + scale * step[pending]
            trial_cost = _objective(trial, target[rows[pending]], basis, weights, gamma)
            better = trial_cost <= cost[rows[pending]]
            index = np.nonzero(pending)[0][better]
            current[index] = trial[better]
            new_cost[index] = trial_cost[better]
            accepted[index] = True
            if accepted.all():
                break
            scale *= 0.5

        old_cost = cost[rows]
        coefs[rows] = current
        cost[rows] = new_cost
        improvement = (old_cost - new_cost) / np.maximum(old_cost, 1e-300)
        done = ~accepted | (improvement < tolerance)
        converged[rows[done]] = True
        active[rows[done]] = False
    return coefs, converged


def mgc_from_log_spectra(
    log_amplitude: np.ndarray,
    order: int,
    alpha: float,
    gamma: float,
    max_iter: int = 30,
    tolerance: float = 1e-6,
) -> Tuple[np.ndarray, int]:
    """
    Fit gain-normalized mel-generalized cepstra to log amplitude spectra
    sampled on a uniform linear grid over [0, pi].

    Returns the coefficients and the number of frames that kept the
    initial solution because refinement did not converge.
    """
    target = _resample_to_warped(np.atleast_2d(log_amplitude), alpha)
    half = target.shape[1] - 1
    if order >= half:
        raise ValueError(f"order {order} needs more than {half + 1} spectral bins")
    warped = np.pi * np.arange(half + 1) / half
    basis = np.cos(np.outer(warped, np.arange(1, order + 1)))
    initial = _initial_solution(target, order, gamma, basis)
    if gamma == 0.0:
        return initial, 0
    weights = np.full(half + 1, 1.0 / half)
    weights[[0, -1]] *= 0.5
    result = np.empty_like(initial)
    fallbacks = 0
    for start in range(0, target.shape[0], CHUNK_FRAMES):
        chunk = slice(start, start + CHUNK_FRAMES)
        refined, converged = _refine(
            initial[chunk], target[chunk], basis, weights, gamma, max_iter, tolerance
        )
        refined[~converged] = initial[chunk][~converged]
        fallbacks += int(np.count_nonzero(~converged))
        result[chunk] = refined
    return result, fallbacks


def mgc_analyze(
    waveform: Waveform,
    grid: FrameGrid,
    alpha: float = 0.42,
    gamma: float = -1.0 / 3.0,
    order: int = 24,
    cfg: SpectralConfig = None,
) -> MgcTrack:
    """
    Mel-generalized cepstral analysis of every frame of `grid`.

    Coefficients minimize the log-spectral least squares distance to the
    Hann-windowed periodogram on the alpha-warped axis.
    """
    if not -1.0 <= gamma <= 0.0:
        raise ValueError(f"gamma must lie in [-1, 0], got {gamma}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if order < 1:
        raise ValueError(f"order must be at least 1, got {order}")
    cfg = cfg or SpectralConfig()
    frames = frame_signal(waveform.samples, grid)
    log_amplitude = log_amplitude_spectra(frames, cfg.fft_len, cfg.power_floor)
    coefs, fallbacks = mgc_from_log_spectra(
        log_amplitude, order, alpha, gamma, cfg.max_iter, cfg.tolerance
    )
    if fallbacks:
        log.warning(
            "%d of %d frames did not converge and kept their initial fit",
            fallbacks,
            grid.n_frames,
        )
    return MgcTrack(coefs, order, alpha, gamma, grid.hop, grid.sample_rate, fallbacks)


def _check_fft_len(fft_len: int) -> None:
    if fft_len < 256 or fft_len & (fft_len - 1):
        raise ValueError(f"fft_len must be a power of two >= 256, got {fft_len}")


def mgc_log_envelopes(
    coefs: np.ndarray, fft_len: int, alpha: float, gamma: float
) -> np.ndarray:
    """Natural-log amplitude of every coefficient row on fft_len / 2 + 1 linear bins."""
    coefs = np.atleast_2d(np.asarray(coefs, dtype=np.float64))
    omega = 2.0 * np.pi * np.arange(fft_len // 2 + 1) / fft_len
    basis = np.cos(np.outer(warp_frequency(omega, alpha), np.arange(1, coefs.shape[1])))
    log_amplitude, _ = _generalized_log(coefs, basis, gamma)
    return np.clip(log_amplitude, -LOG_AMPLITUDE_LIMIT, LOG_AMPLITUDE_LIMIT)


def mgc_to_spectrum(
    frame: np.ndarray, fft_len: int = 1024, alpha: float = 0.42, gamma: float = -1.0 / 3.0
) -> np.ndarray:
    """Strictly positive amplitude spectrum of one coefficient frame."""
    _check_fft_len(fft_len)
    return np.exp(mgc_log_envelopes(frame, fft_len, alpha, gamma)[0])


def mgc_envelopes(track: MgcTrack, fft_len: int = 1024) -> np.ndarray:
    """Amplitude spectra of every frame of `track`."""
    _check_fft_len(fft_len)
    return np.exp(mgc_log_envelopes(track.frames, fft_len, track.alpha, track.gamma))
