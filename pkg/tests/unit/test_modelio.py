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
"""Test reading and writing model files"""

from dataclasses import replace

import numpy as np
import pytest

from continuous_vocoder.errors import StreamFormatError
from continuous_vocoder.features.normalization import compute_stats
from continuous_vocoder.model.modelio import decode_network, encode_network, load_network, save_network
from continuous_vocoder.model.network import LayerSpec, Provenance, init_network


def _network():
    rng = np.random.default_rng(0)
    net = init_network(LayerSpec.uniform(3, 2, 6, 2), seed=9)
    return replace(
        net,
        input_stats=compute_stats([rng.uniform(size=(20, 3))], "minmax"),
        output_stats=compute_stats([rng.normal(size=(20, 2))], "meanvar"),
        input_schema=("a", "b", "c"),
        output_schema=("lf0", "mvf"),
        provenance=Provenance(9, 4, "abc123", "acoustic"),
    )


def test_model_file(tmp_path):
    """Test that a saved network loads with its conditioning and provenance"""

    net = _network()
    path = tmp_path / "avm.cvdn"
    save_network(path, net)
    loaded = load_network(path)
    assert loaded.spec == net.spec
    assert loaded.input_schema == net.input_schema
    assert loaded.output_schema == net.output_schema
    assert loaded.provenance == net.provenance
    assert np.array_equal(loaded.output_stats.offset, net.output_stats.offset)
    for original, restored in zip(net.weights, loaded.weights):
        assert np.allclose(original, restored, rtol=1e-6, atol=1e-7)
    assert encode_network(loaded) == path.read_bytes()


def test_model_without_stats():
    """Test that unconditioned networks are accepted"""

    net = init_network(LayerSpec(2, (), 1), seed=0)
    loaded = decode_network(encode_network(net))
    assert loaded.input_stats is None and loaded.output_stats is None


def test_broken_model_files(tmp_path):
    """Test that damaged or foreign files are rejected"""

    data = encode_network(_network())
    with pytest.raises(StreamFormatError, match="truncated"):
        decode_network(data[: len(data) // 2])
    with pytest.raises(StreamFormatError, match="not a model"):
        decode_network(b"XXXX" + data[4:])
    with pytest.raises(StreamFormatError):
        load_network(tmp_path / "missing.cvdn")
