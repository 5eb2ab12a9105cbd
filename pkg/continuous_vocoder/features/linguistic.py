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
"""Frame- and phone-level linguistic features"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from continuous_vocoder.features.alignment import AlignedUtterance, PhoneInventory
from continuous_vocoder.signal.models import FrameGrid

POSITION_COLUMNS = ("phone_fraction", "phone_duration", "utterance_fraction")


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows with a column schema."""

    values: np.ndarray
    columns: Tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise ValueError(
                f"values of shape {values.shape} do not match {len(self.columns)} columns"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        """Number of columns."""
        return len(self.columns)


def context_columns(inventory: PhoneInventory, context: int) -> List[str]:
    """One-hot column names of the phone context window."""
    return [
        f"phone[{offset:+d}]={symbol}"
        for offset in range(-context, context + 1)
        for symbol in inventory.symbols
    ]


def linguistic_schema(inventory: PhoneInventory, context: int = 2) -> Tuple[str, ...]:
    """Columns of frame-level features: (2 * context + 1) * |inv| + 3."""
    return tuple(context_columns(inventory, context)) + POSITION_COLUMNS


def duration_schema(inventory: PhoneInventory, context: int = 2) -> Tuple[str, ...]:
    """Columns of phone-level features: (2 * context + 1) * |inv| + 1."""
    return tuple(context_columns(inventory, context)) + ("utterance_position",)


def _context_one_hots(
    phone_ids: np.ndarray, rows: np.ndarray, inventory: PhoneInventory, context: int
) -> np.ndarray:
    size = len(inventory)
    one_hots = np.zeros((rows.shape[0], (2 * context + 1) * size))
    for slot, offset in enumerate(range(-context, context + 1)):
        neighbour = rows + offset
        inside = (neighbour >= 0) & (neighbour < phone_ids.shape[0])
        symbol = np.where(inside, phone_ids[np.clip(neighbour, 0, phone_ids.shape[0] - 1)], 0)
        one_hots[np.arange(rows.shape[0]), slot * size + symbol] = 1.0
    return one_hots


def encode_linguistic_features(
    utterance: AlignedUtterance,
    inventory: PhoneInventory,
    grid: FrameGrid,
    context: int = 2,
) -> FeatureMatrix:
    """
    One row per frame: context one-hots, then the fraction of the current
    phone elapsed at the frame center, the phone duration in seconds and
    the fraction of the utterance elapsed.
    """
    phone_ids = np.array([inventory.index(p) for p in utterance.phones])
    starts = np.array([e.start for e in utterance.entries])
    ends = np.array([e.end for e in utterance.entries])
    times = grid.frame_times()
    rows = np.clip(np.searchsorted(ends, times, side="right"), 0, len(utterance) - 1)
    durations = ends[rows] - starts[rows]
    position = np.column_stack(
        [
            np.clip((times - starts[rows]) / durations, 0.0, 1.0),
            durations,
            np.clip(times / utterance.total_duration, 0.0, 1.0),
        ]
    )
    values = np.hstack([_context_one_hots(phone_ids, rows, inventory, context), position])
    return FeatureMatrix(values, linguistic_schema(inventory, context))


def encode_duration_features(
    utterance: AlignedUtterance, inventory: PhoneInventory, context: int = 2
) -> FeatureMatrix:
    """One row per phone: context one-hots and the position in the utterance."""
    phone_ids = np.array([inventory.index(p) for p in utterance.phones])
    rows = np.arange(len(utterance))
    position = rows / max(len(utterance) - 1, 1)
    values = np.hstack(
        [_context_one_hots(phone_ids, rows, inventory, context), position[:, None]]
    )
    return FeatureMatrix(values, duration_schema(inventory, context))


def duration_targets(utterance: AlignedUtterance, hop_seconds: float = 0.005) -> np.ndarray:
    """Phone durations in whole frames (at least one)."""
    frames = np.rint([e.duration / hop_seconds for e in utterance.entries])
    return np.maximum(frames, 1.0)


def utterance_grid(utterance: AlignedUtterance, hop: int, sample_rate: int, frame_len: int = 400) -> FrameGrid:
    """Frame grid spanning an alignment."""
    n_samples = int(round(utterance.total_duration * sample_rate))
    return FrameGrid(hop, frame_len, FrameGrid.frames_for(n_samples, hop), sample_rate)
