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
"""Objective metrics: mel-cepstral distortion and F0 correlation"""

import logging
from typing import Any, Literal, Optional, Tuple, Union

import numpy as np

from continuous_vocoder.analysis.models import F0Track, MgcTrack
from continuous_vocoder.errors import MetricError

log = logging.getLogger(__name__)

STANDARD_DB_FACTOR = 10.0 * np.sqrt(2.0) / np.log(10.0)

MgcLike = Union[MgcTrack, np.ndarray]
F0Like = Union[F0Track, np.ndarray]


def _coefficients(track: MgcLike) -> np.ndarray:
    frames = track.frames if isinstance(track, MgcTrack) else np.asarray(track, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[:, None]
    return frames


def _fit_order(frames: np.ndarray, order: Optional[int]) -> np.ndarray:
    if order is None or order == frames.shape[1]:
        return frames
    if order < frames.shape[1]:
        return frames[:, :order]
    return np.pad(frames, ((0, 0), (0, order - frames.shape[1])))


def mcd(
    x: MgcLike,
    y: MgcLike,
    scaling: Literal["as-printed", "standard-db"] = "as-printed",
    skip_c0: bool = True,
    order: Optional[int] = None,
) -> float:
    """
    Mean over frames of the Euclidean distance between coefficient rows.

    "as-printed" uses the plain distance; "standard-db" multiplies it by
    10 * sqrt(2) / ln 10. `order` truncates or zero-pads both sides to
    that many coefficients before c0 is optionally dropped.
    """
    if isinstance(x, MgcTrack) and isinstance(y, MgcTrack):
        if (x.order, x.alpha, x.gamma) != (y.order, y.alpha, y.gamma):
            raise MetricError(
                f"cepstra differ in analysis settings: order/alpha/gamma "
                f"{(x.order, x.alpha, x.gamma)} vs {(y.order, y.alpha, y.gamma)}"
            )
    a = _fit_order(_coefficients(x), order)
    b = _fit_order(_coefficients(y), order)
    if a.shape != b.shape:
        raise MetricError(f"track shapes differ: {a.shape} vs {b.shape}; align them first")
    if a.shape[0] == 0:
        raise MetricError("cannot measure distortion over zero frames")
    if skip_c0:
        a, b = a[:, 1:], b[:, 1:]
    distance = np.sqrt(np.sum((a - b) ** 2, axis=1))
    if scaling == "standard-db":
        distance = distance * STANDARD_DB_FACTOR
    elif scaling != "as-printed":
        raise ValueError(f"unknown MCD scaling '{scaling}'")
    return float(np.mean(distance))


def _f0_values(track: F0Like) -> np.ndarray:
    values = track.values if isinstance(track, F0Track) else np.asarray(track, dtype=np.float64)
    return values.ravel()


def f0_corr(x: F0Like, y: F0Like, exclude_unvoiced_reference: bool = False) -> float:
    """
    Pearson correlation between a reference contour `x` and a produced
    contour `y`. With `exclude_unvoiced_reference`, frames where the
    reference is zero are left out.
    """
    a, b = _f0_values(x), _f0_values(y)
    if a.shape != b.shape:
        raise MetricError(f"track lengths differ: {a.shape[0]} vs {b.shape[0]}; align them first")
    if exclude_unvoiced_reference:
        voiced = a != 0.0
        a, b = a[voiced], b[voiced]
    if a.shape[0] < 2:
        raise MetricError("correlation needs at least two frames")
    da, db = a - a.mean(), b - b.mean()
    denominator = np.sqrt(np.sum(da**2) * np.sum(db**2))
    if denominator == 0.0:
        which = "both tracks are" if not da.any() and not db.any() else "a track is"
        raise MetricError(f"correlation is undefined: {which} constant")
    return float(np.clip(np.sum(da * db) / denominator, -1.0, 1.0))


def _length(track: Any) -> int:
    for attribute in ("frames", "values"):
        if hasattr(track, attribute):
            return getattr(track, attribute).shape[0]
    return len(track)


def _truncate(track: Any, n_frames: int) -> Any:
    if hasattr(track, "truncate"):
        return track.truncate(n_frames)
    return track[:n_frames]


def align_tracks(a: Any, b: Any) -> Tuple[Any, Any, int]:
    """Truncate both tracks to the shorter length; returns the dropped-frame count."""
    length_a, length_b = _length(a), _length(b)
    shortest = min(length_a, length_b)
    dropped = max(length_a, length_b) - shortest
    if dropped:
        log.debug("aligning tracks dropped %d frames", dropped)
        return _truncate(a, shortest), _truncate(b, shortest), dropped
    return a, b, 0
