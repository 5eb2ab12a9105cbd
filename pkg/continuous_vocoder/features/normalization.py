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
"""Feature normalization statistics and their CVST file format"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Tuple, Union

import numpy as np

from continuous_vocoder.errors import StreamFormatError
from continuous_vocoder.fileio import atomic_write

log = logging.getLogger(__name__)

STATS_MAGIC = b"CVST"
STATS_VERSION = 1
LOW, HIGH = 0.01, 0.99
_KINDS = ("minmax", "meanvar")

StatsKind = Literal["minmax", "meanvar"]


@dataclass(frozen=True)
class FeatureStats:
    """
    Per-column affine normalization.

    minmax maps [offset, offset + scale] onto [0.01, 0.99]; meanvar
    subtracts the mean (offset) and divides by the deviation (scale).
    Columns flagged `constant` pass through unchanged.
    """

    kind: StatsKind
    offset: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    @property
    def dim(self) -> int:
        """Number of columns described."""
        return self.offset.shape[0]


def compute_stats(matrices: Iterable[np.ndarray], kind: StatsKind = "minmax") -> FeatureStats:
    """Column statistics pooled over every row of every matrix."""
    if kind not in _KINDS:
        raise ValueError(f"unknown normalization kind '{kind}'")
    pooled = np.vstack([np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in matrices])
    if pooled.shape[0] == 0:
        raise ValueError("cannot compute statistics of an empty corpus")
    if kind == "minmax":
        offset = pooled.min(axis=0)
        scale = pooled.max(axis=0) - offset
    else:
        offset = pooled.mean(axis=0)
        scale = pooled.std(axis=0)
    constant = scale <= 1e-12 * np.maximum(1.0, np.abs(offset))
    if constant.any():
        log.debug("%d constant columns pass through unnormalized", int(constant.sum()))
    return FeatureStats(kind, offset, np.where(constant, 1.0, scale), constant)


def normalize(values: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Apply `stats` column-wise."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != stats.dim:
        raise ValueError(f"expected {stats.dim} columns, got {values.shape[-1]}")
    scaled = (values - stats.offset) / stats.scale
    if stats.kind == "minmax":
        scaled = LOW + (HIGH - LOW) * scaled
    return np.where(stats.constant, values, scaled)


def denormalize(values: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Inverse of normalize."""
    values = np.asarray(values, dtype=np.float64)
    scaled = values
    if stats.kind == "minmax":
        scaled = (values - LOW) / (HIGH - LOW)
    restored = scaled * stats.scale + stats.offset
    return np.where(stats.constant, values, restored)


def encode_stats(stats: FeatureStats) -> bytes:
    """Serialize in the versioned CVST layout."""
    header = STATS_MAGIC + struct.pack(
        "<HBI", STATS_VERSION, _KINDS.index(stats.kind), stats.dim
    )
    return (
        header
        + stats.offset.astype("<f8").tobytes()
        + stats.scale.astype("<f8").tobytes()
        + stats.constant.astype(np.uint8).tobytes()
    )


def decode_stats(data: bytes, source: str = "<bytes>") -> Tuple[FeatureStats, int]:
    """Parse CVST bytes; returns the stats and the number of bytes consumed."""
    if len(data) < 11 or data[:4] != STATS_MAGIC:
        raise StreamFormatError(f"{source}: not a normalization stats block")
    version, kind, dim = struct.unpack_from("<HBI", data, 4)
    if version != STATS_VERSION or kind >= len(_KINDS):
        raise StreamFormatError(f"{source}: unsupported stats version {version}/{kind}")
    end = 11 + 17 * dim
    if len(data) < end:
        raise StreamFormatError(f"{source}: stats block is truncated")
    offset = np.frombuffer(data, "<f8", dim, 11).astype(np.float64)
    scale = np.frombuffer(data, "<f8", dim, 11 + 8 * dim).astype(np.float64)
    constant = np.frombuffer(data, np.uint8, dim, 11 + 16 * dim).astype(bool)
    return FeatureStats(_KINDS[kind], offset, scale, constant), end


def save_stats(path: Union[str, Path], stats: FeatureStats) -> None:
    """Write a stats file atomically."""
    atomic_write(path, encode_stats(stats))


def load_stats(path: Union[str, Path]) -> FeatureStats:
    """Read a stats file."""
    path = Path(path)
    if not path.is_file():
        raise StreamFormatError(f"no such stats file: {path}")
    return decode_stats(path.read_bytes(), str(path))[0]
