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
"""Per-frame parameter tracks produced by analysis and consumed by synthesis"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


def _as_vector(values) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 1:
        raise ValueError(f"expected a one-dimensional track, got shape {array.shape}")
    return array


@dataclass(frozen=True)
class F0Track:
    """
    Continuous fundamental frequency: one positive value per frame, in Hz.

    `periodicity` holds the per-frame voicing strength in [0, 1] when the
    track comes from analysis; predicted tracks carry none.
    """

    values: np.ndarray
    hop: int = 80
    sample_rate: int = 16000
    periodicity: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_vector(self.values))
        if self.periodicity is not None:
            periodicity = _as_vector(self.periodicity)
            if periodicity.shape != self.values.shape:
                raise ValueError("periodicity must have one value per frame")
            object.__setattr__(self, "periodicity", periodicity)

    def __len__(self) -> int:
        return self.values.shape[0]

    def log_values(self) -> np.ndarray:
        """Natural log of F0, the stream a network models."""
        return np.log(self.values)

    def anchored(self, gate: float) -> np.ndarray:
        """Frames whose periodicity reaches `gate`."""
        if self.periodicity is None:
            return np.ones(len(self), dtype=bool)
        return self.periodicity >= gate

    def truncate(self, n_frames: int) -> "F0Track":
        """First `n_frames` frames."""
        periodicity = None if self.periodicity is None else self.periodicity[:n_frames]
        return replace(self, values=self.values[:n_frames], periodicity=periodicity)


@dataclass(frozen=True)
class MvfTrack:
    """Maximum voiced frequency per frame, in Hz."""

    values: np.ndarray
    hop: int = 80
    sample_rate: int = 16000

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_vector(self.values))

    def __len__(self) -> int:
        return self.values.shape[0]

    def truncate(self, n_frames: int) -> "MvfTrack":
        """First `n_frames` frames."""
        return replace(self, values=self.values[:n_frames])


@dataclass(frozen=True)
class MgcTrack:
    """
    Mel-generalized cepstra, one row of order + 1 coefficients per frame.

    Coefficient 0 is the log gain; 1..order describe the gain-normalized
    envelope under all-pass warping `alpha` and generalization `gamma`.
    """

    frames: np.ndarray
    order: int = 24
    alpha: float = 0.42
    gamma: float = -1.0 / 3.0
    hop: int = 80
    sample_rate: int = 16000
    fallback_frames: int = 0

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != self.order + 1:
            raise ValueError(
                f"expected frames of {self.order + 1} coefficients, got shape {frames.shape}"
            )
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    def truncate(self, n_frames: int) -> "MgcTrack":
        """First `n_frames` frames."""
        return replace(self, frames=self.frames[:n_frames])


@dataclass(frozen=True)
class ResidualPrototype:
    """
    Speaker-level excitation pulse: the first principal component of
    pitch-synchronous residual cycles.
    """

    pulse: np.ndarray
    energy_share: float = 1.0
    source_cycle_count: int = 0
    component_index: int = 0

    def __post_init__(self) -> None:
        pulse = _as_vector(self.pulse)
        norm = np.linalg.norm(pulse)
        if norm == 0.0:
            raise ValueError("a prototype pulse cannot be all zeros")
        object.__setattr__(self, "pulse", pulse / norm)

    def __len__(self) -> int:
        return self.pulse.shape[0]


@dataclass(frozen=True)
class GciList:
    """
    Glottal closure instants as strictly increasing sample indices.

    `run_starts` indexes the instants that open a run of consecutive
    periods; gaps between runs span unvoiced stretches and are unbounded.
    """

    positions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sample_rate: int = 16000
    run_starts: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        positions = np.asarray(self.positions, dtype=np.int64)
        if positions.size > 1 and np.any(np.diff(positions) <= 0):
            raise ValueError("glottal closure instants must be strictly increasing")
        if self.run_starts is None:
            starts = np.zeros(min(positions.size, 1), dtype=np.int64)
        else:
            starts = np.unique(np.asarray(self.run_starts, dtype=np.int64))
        if positions.size and (starts.size == 0 or starts[0] != 0 or starts[-1] >= positions.size):
            raise ValueError("runs must start at instant 0 and index existing instants")
        if not positions.size and starts.size:
            raise ValueError("an empty instant list has no runs")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "run_starts", starts)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def gaps_within_runs(self) -> np.ndarray:
        """Spacing of consecutive instants of the same run, in samples."""
        gaps = np.diff(self.positions)
        opens_run = np.zeros(len(self), dtype=bool)
        opens_run[self.run_starts] = True
        return gaps[~opens_run[1:]]

    def check_spacing(self, f0_floor: float, f0_ceil: float) -> None:
        """Raise ValueError when a gap inside a run leaves the F0 range."""
        gaps = self.gaps_within_runs()
        low = 0.5 * self.sample_rate / f0_ceil
        high = 2.0 * self.sample_rate / f0_floor
        outside = gaps[(gaps < low) | (gaps > high)]
        if outside.size:
            raise ValueError(
                f"{outside.size} closure gaps fall outside [{low:.1f}, {high:.1f}] samples"
            )
