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
"""Test the feedforward network"""

import numpy as np
import pytest

from continuous_vocoder.errors import SchemaMismatchError
from continuous_vocoder.model.network import (
    LayerSpec,
    forward,
    init_network,
    loss_and_gradients,
)

EPSILON = 1e-6


def _numeric_gradient(net, inputs, targets, layer, is_bias):
    parameters = net.biases if is_bias else net.weights
    numeric = np.zeros_like(parameters[layer])
    for index in np.ndindex(numeric.shape):
        losses = []
        for sign in (1.0, -1.0):
            shifted = [p.copy() for p in parameters]
            shifted[layer][index] += sign * EPSILON
            if is_bias:
                probe = net.with_parameters(net.weights, shifted)
            else:
                probe = net.with_parameters(shifted, net.biases)
            losses.append(loss_and_gradients(probe, inputs, targets)[0])
        numeric[index] = (losses[0] - losses[1]) / (2 * EPSILON)
    return numeric


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    """Test backpropagation against central differences"""

    rng = np.random.default_rng(seed)
    hidden = tuple(
        (int(rng.integers(2, 6)), ("tanh", "linear")[int(rng.integers(2))])
        for _ in range(int(rng.integers(1, 4)))
    )
    spec = LayerSpec(int(rng.integers(1, 5)), hidden, int(rng.integers(1, 4)))
    net = init_network(spec, seed=seed)
    inputs = rng.normal(size=(6, spec.input_dim))
    targets = rng.normal(size=(6, spec.output_dim))
    _, weight_grads, bias_grads = loss_and_gradients(net, inputs, targets)
    for layer in range(net.n_layers):
        for is_bias, analytic in ((False, weight_grads[layer]), (True, bias_grads[layer])):
            numeric = _numeric_gradient(net, inputs, targets, layer, is_bias)
            error = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-4)
            assert error.max() <= 1e-4


def test_init_is_deterministic():
    """Test that the seed alone determines the initial parameters"""

    spec = LayerSpec.uniform(5, 2, 8, 3)
    first, second = init_network(spec, 7), init_network(spec, 7)
    other = init_network(spec, 8)
    assert all(np.array_equal(a, b) for a, b in zip(first.weights, second.weights))
    assert not np.array_equal(first.weights[0], other.weights[0])
    assert all(np.all(b == 0.0) for b in first.biases)
    limit = np.sqrt(6.0 / (5 + 8))
    assert np.abs(first.weights[0]).max() <= limit


def test_forward_shapes_and_schema():
    """Test the output shape and the rejection of mismatched inputs"""

    net = init_network(LayerSpec.uniform(4, 1, 3, 2), 0)
    assert forward(net, np.zeros((7, 4))).shape == (7, 2)
    assert np.allclose(forward(net, np.zeros((1, 4))), 0.0)
    with pytest.raises(SchemaMismatchError, match="4 input columns"):
        forward(net, np.zeros((2, 5)))


def test_layer_spec_validation():
    """Test topology checks"""

    spec = LayerSpec.uniform(10, 3, 16, 4)
    assert spec.dims == [10, 16, 16, 16, 4]
    assert spec.activations == ["tanh", "tanh", "tanh", "linear"]
    with pytest.raises(ValueError):
        LayerSpec(10, ((0, "tanh"),), 4)
    with pytest.raises(ValueError):
        LayerSpec(10, ((8, "relu"),), 4)
