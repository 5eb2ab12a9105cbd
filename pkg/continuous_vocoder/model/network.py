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
"""Feedforward network: parameters, forward pass and backpropagation"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from continuous_vocoder.errors import SchemaMismatchError
from continuous_vocoder.features.normalization import FeatureStats

ACTIVATIONS = ("linear", "tanh")


@dataclass(frozen=True)
class LayerSpec:
    """
    Topology: input width, hidden layers as (width, activation) and a
    linear output layer.
    """

    input_dim: int
    hidden: Tuple[Tuple[int, str], ...]
    output_dim: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(tuple(h) for h in self.hidden))
        widths = [self.input_dim, self.output_dim] + [w for w, _ in self.hidden]
        if any(int(w) <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        unknown = {a for _, a in self.hidden} - set(ACTIVATIONS)
        if unknown:
            raise ValueError(f"unknown activations {sorted(unknown)}")

    @classmethod
    def uniform(cls, input_dim: int, layers: int, width: int, output_dim: int, activation: str = "tanh") -> "LayerSpec":
        """`layers` hidden layers of identical width."""
        return cls(input_dim, tuple((width, activation) for _ in range(layers)), output_dim)

    @property
    def dims(self) -> List[int]:
        """Widths from input to output."""
        return [self.input_dim] + [w for w, _ in self.hidden] + [self.output_dim]

    @property
    def activations(self) -> List[str]:
        """Activation of every weight layer; the last is linear."""
        return [a for _, a in self.hidden] + ["linear"]


@dataclass(frozen=True)
class Provenance:
    """Where a network's parameters came from."""

    seed: int = 0
    epochs_trained: int = 0
    corpus_digest: str = ""
    kind: str = "acoustic"


@dataclass(frozen=True)
class Network:
    """A trained or initialized network together with its data conditioning."""

    spec: LayerSpec
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    input_stats: Optional[FeatureStats] = None
    output_stats: Optional[FeatureStats] = None
    input_schema: Tuple[str, ...] = ()
    output_schema: Tuple[str, ...] = ()
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self) -> None:
        dims = self.spec.dims
        for index, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            if weight.shape != (dims[index], dims[index + 1]) or bias.shape != (dims[index + 1],):
                raise ValueError(f"layer {index} parameters do not match the spec")
        if len(self.weights) != len(dims) - 1:
            raise ValueError("one weight matrix per layer is required")

    @property
    def n_layers(self) -> int:
        """Number of weight layers."""
        return len(self.weights)

    def with_parameters(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]) -> "Network":
        """Copy carrying new parameters."""
        return replace(self, weights=tuple(weights), biases=tuple(biases))

    def parameters_finite(self) -> bool:
        """True when no weight or bias is NaN or infinite."""
        return all(np.all(np.isfinite(p)) for p in self.weights + self.biases)


def init_network(spec: LayerSpec, seed: int = 0) -> Network:
    """Glorot-uniform weights and zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    dims = spec.dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(spec, tuple(weights), tuple(biases), provenance=Provenance(seed=seed))


def _activate(values: np.ndarray, activation: str) -> np.ndarray:
    return np.tanh(values) if activation == "tanh" else values


def forward_layers(net: Network, inputs: np.ndarray) -> List[np.ndarray]:
    """Activations of every layer, the inputs first."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[1] != net.spec.input_dim:
        raise SchemaMismatchError(
            f"network expects {net.spec.input_dim} input columns, got {inputs.shape[1]}"
        )
    outputs = [inputs]
    for weight, bias, activation in zip(net.weights, net.biases, net.spec.activations):
        outputs.append(_activate(outputs[-1] @ weight + bias, activation))
    return outputs


def forward(net: Network, inputs: np.ndarray) -> np.ndarray:
    """Outputs in the network's normalized space."""
    return forward_layers(net, inputs)[-1]


def loss_and_gradients(
    net: Network, inputs: np.ndarray, targets: np.ndarray
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """Mean squared error over all elements and its parameter gradients."""
    outputs = forward_layers(net, inputs)
    error = outputs[-1] - targets
    loss = float(np.mean(error**2))
    delta = 2.0 * error / error.size
    weight_grads: List[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    bias_grads: List[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    for layer in range(net.n_layers - 1, -1, -1):
        weight_grads[layer] = outputs[layer].T @ delta
        bias_grads[layer] = delta.sum(axis=0)
        if layer:
            delta = delta @ net.weights[layer].T
            if net.spec.activations[layer - 1] == "tanh":
                delta = delta * (1.0 - outputs[layer] ** 2)
    return loss, weight_grads, bias_grads
