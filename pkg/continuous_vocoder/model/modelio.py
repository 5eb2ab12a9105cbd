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
"""CVDN model files"""

import json
import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from continuous_vocoder.errors import StreamFormatError
from continuous_vocoder.features.normalization import FeatureStats, decode_stats, encode_stats
from continuous_vocoder.fileio import atomic_write
from continuous_vocoder.model.network import ACTIVATIONS, LayerSpec, Network, Provenance

log = logging.getLogger(__name__)

MODEL_MAGIC = b"CVDN"
MODEL_VERSION = 1


def _stats_block(stats: Optional[FeatureStats]) -> bytes:
    data = b"" if stats is None else encode_stats(stats)
    return struct.pack("<I", len(data)) + data


def encode_network(net: Network) -> bytes:
    """
    Serialize a network: header, layer table, float32 weights and biases,
    input and output statistics, then a JSON provenance block.
    """
    parts = [MODEL_MAGIC, struct.pack("<HH", MODEL_VERSION, net.n_layers)]
    dims = net.spec.dims
    for index, activation in enumerate(net.spec.activations):
        parts.append(struct.pack("<IIB", dims[index], dims[index + 1], ACTIVATIONS.index(activation)))
    for weight, bias in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(weight, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(bias, dtype="<f4").tobytes())
    parts.append(_stats_block(net.input_stats))
    parts.append(_stats_block(net.output_stats))
    provenance = {
        "seed": net.provenance.seed,
        "epochs_trained": net.provenance.epochs_trained,
        "corpus_digest": net.provenance.corpus_digest,
        "kind": net.provenance.kind,
        "input_schema": list(net.input_schema),
        "output_schema": list(net.output_schema),
    }
    block = json.dumps(provenance, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(block)) + block)
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.source = source
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise StreamFormatError(f"{self.source}: model file is truncated")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_network(data: bytes, source: str = "<bytes>") -> Network:
    """Parse CVDN bytes."""
    reader = _Reader(data, source)
    if reader.take(4) != MODEL_MAGIC:
        raise StreamFormatError(f"{source}: not a model file")
    version, n_layers = reader.unpack("<HH")
    if version != MODEL_VERSION:
        raise StreamFormatError(f"{source}: unsupported model version {version}")
    table = [reader.unpack("<IIB") for _ in range(n_layers)]
    if not table or any(tag >= len(ACTIVATIONS) for _, _, tag in table):
        raise StreamFormatError(f"{source}: malformed layer table")
    if table[-1][2] != ACTIVATIONS.index("linear"):
        raise StreamFormatError(f"{source}: the output layer must be linear")
    weights, biases = [], []
    for fan_in, fan_out, _ in table:
        weights.append(
            np.frombuffer(reader.take(4 * fan_in * fan_out), "<f4").astype(np.float64).reshape(fan_in, fan_out)
        )
        biases.append(np.frombuffer(reader.take(4 * fan_out), "<f4").astype(np.float64))
    stats = []
    for _ in range(2):
        (size,) = reader.unpack("<I")
        stats.append(decode_stats(reader.take(size), source)[0] if size else None)
    (size,) = reader.unpack("<I")
    try:
        provenance = json.loads(reader.take(size).decode("utf-8"))
    except ValueError as error:
        raise StreamFormatError(f"{source}: unreadable provenance block") from error
    spec = LayerSpec(
        table[0][0],
        tuple((fan_out, ACTIVATIONS[tag]) for _, fan_out, tag in table[:-1]),
        table[-1][1],
    )
    try:
        return Network(
            spec,
            tuple(weights),
            tuple(biases),
            stats[0],
            stats[1],
            tuple(provenance.get("input_schema", ())),
            tuple(provenance.get("output_schema", ())),
            Provenance(
                int(provenance.get("seed", 0)),
                int(provenance.get("epochs_trained", 0)),
                str(provenance.get("corpus_digest", "")),
                str(provenance.get("kind", "acoustic")),
            ),
        )
    except ValueError as error:
        raise StreamFormatError(f"{source}: {error}") from error


def save_network(path: Union[str, Path], net: Network) -> None:
    """Write a model file atomically."""
    atomic_write(path, encode_network(net))
    log.info("saved %s model (%d layers) to %s", net.provenance.kind, net.n_layers, path)


def load_network(path: Union[str, Path]) -> Network:
    """Read a model file."""
    path = Path(path)
    if not path.is_file():
        raise StreamFormatError(f"no such model file: {path}")
    return decode_network(path.read_bytes(), str(path))
