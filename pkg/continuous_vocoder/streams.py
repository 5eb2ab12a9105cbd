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
"""On-disk formats of parameter streams and residual prototypes"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Union

import numpy as np

from continuous_vocoder.analysis.models import F0Track, MgcTrack, MvfTrack, ResidualPrototype
from continuous_vocoder.errors import StreamFormatError
from continuous_vocoder.fileio import atomic_write

log = logging.getLogger(__name__)

LF0_SUFFIX = ".lf0"
MVF_SUFFIX = ".mvf"
MGC_SUFFIX = ".mgc"
META_SUFFIX = ".meta"

PROTOTYPE_MAGIC = b"CVRP"
PROTOTYPE_VERSION = 1

PathLike = Union[str, Path]


@dataclass(frozen=True)
class ParamTrack:
    """The three synthesis streams of one utterance on a shared frame clock."""

    f0: F0Track
    mvf: MvfTrack
    mgc: MgcTrack

    def __post_init__(self) -> None:
        lengths = {len(self.f0), len(self.mvf), len(self.mgc)}
        hops = {self.f0.hop, self.mvf.hop, self.mgc.hop}
        if len(lengths) != 1:
            raise StreamFormatError(
                f"stream lengths differ: lf0={len(self.f0)}, "
                f"mvf={len(self.mvf)}, mgc={len(self.mgc)}"
            )
        if len(hops) != 1:
            raise StreamFormatError(f"streams use different hops: {sorted(hops)}")

    @property
    def n_frames(self) -> int:
        """Frames in every stream."""
        return len(self.f0)

    @property
    def hop(self) -> int:
        """Samples per frame."""
        return self.f0.hop

    @property
    def sample_rate(self) -> int:
        """Working rate of the frame clock."""
        return self.f0.sample_rate

    def truncate(self, n_frames: int) -> "ParamTrack":
        """First `n_frames` frames of every stream."""
        return ParamTrack(
            self.f0.truncate(n_frames),
            self.mvf.truncate(n_frames),
            self.mgc.truncate(n_frames),
        )


def write_stream(path: PathLike, values: np.ndarray) -> None:
    """Write frame-major little-endian float32 values without a header."""
    atomic_write(path, np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_stream(path: PathLike, width: int = 1) -> np.ndarray:
    """
    Read a headerless float32 stream of `width` values per frame.

    Returns a vector for width 1 and an (n_frames, width) matrix otherwise.
    """
    path = Path(path)
    if not path.is_file():
        raise StreamFormatError(f"no such stream file: {path}")
    raw = path.read_bytes()
    if len(raw) % (4 * width):
        raise StreamFormatError(
            f"{path}: {len(raw)} bytes is not a whole number of {width}-value frames"
        )
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise StreamFormatError(f"{path}: stream holds non-finite values")
    return values if width == 1 else values.reshape(-1, width)


def write_mgc_meta(path: PathLike, mgc: MgcTrack) -> None:
    """Write the key=value sidecar describing an MGC stream."""
    lines = [
        f"order={mgc.order}",
        f"alpha={mgc.alpha!r}",
        f"gamma={mgc.gamma!r}",
        f"hop_ms={mgc.hop * 1000.0 / mgc.sample_rate!r}",
        f"sample_rate={mgc.sample_rate}",
    ]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_mgc_meta(path: PathLike) -> Dict[str, float]:
    """Read an MGC sidecar; every required key must be present."""
    path = Path(path)
    if not path.is_file():
        raise StreamFormatError(f"no such metadata file: {path}")
    meta: Dict[str, float] = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise StreamFormatError(f"{path}: line {number} is not key=value")
        try:
            meta[key.strip()] = float(value)
        except ValueError as error:
            raise StreamFormatError(f"{path}: line {number}: {error}") from error
    missing = {"order", "alpha", "gamma", "hop_ms", "sample_rate"} - set(meta)
    if missing:
        raise StreamFormatError(f"{path}: missing keys {sorted(missing)}")
    return meta


def _base(path: PathLike) -> Path:
    path = Path(path)
    if path.suffix in (LF0_SUFFIX, MVF_SUFFIX, MGC_SUFFIX, META_SUFFIX):
        path = path.with_suffix("")
    return path


def stream_paths(base: PathLike) -> Dict[str, Path]:
    """Paths of the four files that make up a stored ParamTrack."""
    base = _base(base)
    return {
        suffix: base.with_name(base.name + suffix)
        for suffix in (LF0_SUFFIX, MVF_SUFFIX, MGC_SUFFIX, META_SUFFIX)
    }


def save_param_track(base: PathLike, track: ParamTrack) -> Dict[str, Path]:
    """Write `<base>.lf0`, `.mvf`, `.mgc` and `.meta`."""
    paths = stream_paths(base)
    write_stream(paths[LF0_SUFFIX], track.f0.log_values())
    write_stream(paths[MVF_SUFFIX], track.mvf.values)
    write_stream(paths[MGC_SUFFIX], track.mgc.frames)
    write_mgc_meta(paths[META_SUFFIX], track.mgc)
    return paths


def load_param_track(base: PathLike) -> ParamTrack:
    """Read the three streams and the sidecar written by save_param_track."""
    paths = stream_paths(base)
    meta = read_mgc_meta(paths[META_SUFFIX])
    order = int(meta["order"])
    sample_rate = int(meta["sample_rate"])
    hop = int(round(meta["hop_ms"] * 1e-3 * sample_rate))
    lf0 = read_stream(paths[LF0_SUFFIX])
    mvf = read_stream(paths[MVF_SUFFIX])
    frames = read_stream(paths[MGC_SUFFIX], order + 1)
    return ParamTrack(
        F0Track(np.exp(lf0), hop, sample_rate),
        MvfTrack(mvf, hop, sample_rate),
        MgcTrack(frames, order, meta["alpha"], meta["gamma"], hop, sample_rate),
    )


def encode_prototype(prototype: ResidualPrototype) -> bytes:
    """Serialize a prototype in the versioned CVRP layout."""
    header = PROTOTYPE_MAGIC + struct.pack("<HI", PROTOTYPE_VERSION, len(prototype))
    trailer = struct.pack(
        "<fIH",
        prototype.energy_share,
        prototype.source_cycle_count,
        prototype.component_index,
    )
    return header + prototype.pulse.astype("<f4").tobytes() + trailer


def decode_prototype(data: bytes, source: str = "<bytes>") -> ResidualPrototype:
    """Parse CVRP bytes."""
    if len(data) < 10 or data[:4] != PROTOTYPE_MAGIC:
        raise StreamFormatError(f"{source}: not a residual prototype file")
    version, length = struct.unpack_from("<HI", data, 4)
    if version != PROTOTYPE_VERSION:
        raise StreamFormatError(f"{source}: unsupported prototype version {version}")
    end = 10 + 4 * length
    trailer_size = struct.calcsize("<fIH")
    if len(data) < end + trailer_size:
        raise StreamFormatError(f"{source}: prototype file is truncated")
    pulse = np.frombuffer(data[10:end], dtype="<f4").astype(np.float64)
    energy_share, cycles, component = struct.unpack_from("<fIH", data, end)
    try:
        return ResidualPrototype(pulse, float(energy_share), cycles, component)
    except ValueError as error:
        raise StreamFormatError(f"{source}: {error}") from error


def save_prototype(path: PathLike, prototype: ResidualPrototype) -> None:
    """Write a prototype file atomically."""
    atomic_write(path, encode_prototype(prototype))
    log.debug("wrote %d-sample prototype to %s", len(prototype), path)


def load_prototype(path: PathLike) -> ResidualPrototype:
    """Read a prototype file."""
    path = Path(path)
    if not path.is_file():
        raise StreamFormatError(f"no such prototype file: {path}")
    return decode_prototype(path.read_bytes(), str(path))
