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
"""Reading and writing RIFF WAV files"""

import io
import logging
import struct
import wave
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from continuous_vocoder.errors import (
    MissingFileError,
    TruncatedFileError,
    UnsupportedFormatError,
)
from continuous_vocoder.fileio import atomic_write
from continuous_vocoder.signal.models import Waveform

log = logging.getLogger(__name__)

FORMAT_PCM = 0x0001
FORMAT_FLOAT = 0x0003
FORMAT_EXTENSIBLE = 0xFFFE
SAMPLE_BITS = (8, 16, 24, 32)


def _chunks(data: bytes):
    offset = 12
    while offset + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, offset)
        yield chunk_id, offset + 8, size
        offset += 8 + size + (size & 1)


def _decode(raw: bytes, format_tag: int, bits: int, path: Path) -> np.ndarray:
    if format_tag == FORMAT_FLOAT and bits == 32:
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if format_tag != FORMAT_PCM:
        raise UnsupportedFormatError(
            f"{path}: format tag {format_tag:#06x} with {bits} bits is not supported"
        )
    if bits == 8:
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if bits == 24:
        triplets = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        values = triplets[:, 0] | (triplets[:, 1] << 8) | (triplets[:, 2] << 16)
        values = np.where(values >= 1 << 23, values - (1 << 24), values)
        return values.astype(np.float64) / float(1 << 23)
    raise UnsupportedFormatError(f"{path}: {bits}-bit PCM is not supported")


def read_wav(path: Union[str, Path]) -> Waveform:
    """
    Read a WAV file into a mono waveform scaled to [-1, 1].

    Supports 8/16/24-bit integer PCM and 32-bit float, including the
    extensible header form. Multi-channel files are averaged to mono.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such audio file: {path}")
    data = path.read_bytes()
    if len(data) < 12:
        raise TruncatedFileError(f"{path}: RIFF header is truncated")
    riff, _, wave_id = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave_id != b"WAVE":
        raise UnsupportedFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    samples_raw = None
    for chunk_id, start, size in _chunks(data):
        if chunk_id == b"fmt ":
            if size < 16 or start + 16 > len(data):
                raise TruncatedFileError(f"{path}: fmt chunk is truncated")
            fmt = struct.unpack_from("<HHIIHH", data, start)
            if fmt[0] == FORMAT_EXTENSIBLE:
                if size < 40 or start + 40 > len(data):
                    raise TruncatedFileError(f"{path}: extensible fmt chunk is truncated")
                subformat = struct.unpack_from("<H", data, start + 24)[0]
                fmt = (subformat,) + fmt[1:]
        elif chunk_id == b"data":
            if start + size > len(data):
                raise TruncatedFileError(
                    f"{path}: data chunk declares {size} bytes, "
                    f"only {len(data) - start} present"
                )
            samples_raw = data[start : start + size]
    if fmt is None:
        raise TruncatedFileError(f"{path}: no fmt chunk")
    if samples_raw is None:
        raise TruncatedFileError(f"{path}: no data chunk")

    format_tag, channels, sample_rate, _, block_align, bits = fmt
    if bits not in SAMPLE_BITS:
        raise UnsupportedFormatError(f"{path}: {bits}-bit samples are not supported")
    if channels < 1 or sample_rate < 1 or block_align != channels * bits // 8:
        raise UnsupportedFormatError(f"{path}: inconsistent fmt chunk")
    usable = len(samples_raw) - len(samples_raw) % block_align
    samples = _decode(samples_raw[:usable], format_tag, bits, path)
    samples = samples.reshape(-1, channels).mean(axis=1)
    if not np.all(np.isfinite(samples)):
        raise UnsupportedFormatError(f"{path}: non-finite float samples")
    over = int(np.count_nonzero(np.abs(samples) > 1.0))
    if over:
        log.warning("%s: %d samples beyond full scale were clipped", path, over)
        samples = np.clip(samples, -1.0, 1.0)
    return Waveform(samples, sample_rate)


def encode_wav(waveform: Waveform) -> Tuple[bytes, int]:
    """Encode as 16-bit mono PCM; returns the bytes and the clipped-sample count."""
    samples = waveform.samples
    clipped = int(np.count_nonzero(np.abs(samples) > 1.0))
    quantized = np.clip(np.rint(np.clip(samples, -1.0, 1.0) * 32768.0), -32768, 32767)
    buffer = io.BytesIO()
    with wave.open(buffer, "wb") as wav_file:
        wav_file.setnchannels(1)
        wav_file.setsampwidth(2)
        wav_file.setframerate(waveform.sample_rate)
        wav_file.writeframes(quantized.astype("<i2").tobytes())
    return buffer.getvalue(), clipped


def write_wav(path: Union[str, Path], waveform: Waveform) -> int:
    """
    Write `waveform` as 16-bit mono PCM.

    Samples beyond full scale are clipped and counted; the count is
    returned and logged. The file is written atomically.
    """
    data, clipped = encode_wav(waveform)
    if clipped:
        log.warning("%s: %d samples clipped while writing", path, clipped)
    atomic_write(path, data)
    return clipped
