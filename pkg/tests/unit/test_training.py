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
"""Test SGD training, average voice training and adaptation"""

import numpy as np
import pytest

from continuous_vocoder.config import AdaptConfig, NetworkConfig, TrainConfig
from continuous_vocoder.errors import (
    InsufficientDataError,
    SchemaMismatchError,
    TrainingDivergedError,
)
from continuous_vocoder.features.linguistic import FeatureMatrix
from continuous_vocoder.features.normalization import compute_stats
from continuous_vocoder.model.network import LayerSpec, init_network
from continuous_vocoder.model.training import (
    UtteranceExample,
    adapt,
    clamp_durations,
    learning_rate,
    predict_durations,
    predict_raw,
    rebase_output,
    sgd_epoch,
    train_avm,
    train_duration_model,
    trainable_layers,
)

INPUT_COLUMNS = ("x0", "x1", "x2", "x3")
TARGET_COLUMNS = ("y0", "y1")
SMALL_NET = NetworkConfig(hidden_layers=1, hidden_width=8)


def _examples(speaker, n_utterances=4, rows=20, offset=0.0, seed=0):
    rng = np.random.default_rng(seed)
    examples = []
    for index in range(n_utterances):
        inputs = rng.uniform(-1.0, 1.0, (rows, len(INPUT_COLUMNS)))
        targets = np.column_stack(
            [np.sin(2.0 * inputs[:, 0]) + inputs[:, 1], inputs[:, 2] * inputs[:, 3]]
        )
        examples.append(
            UtteranceExample(
                f"{speaker}_{index:03d}",
                speaker,
                FeatureMatrix(inputs, INPUT_COLUMNS),
                targets + offset,
                TARGET_COLUMNS,
            )
        )
    return examples


def _average_voice(epochs=3):
    corpus = _examples("a", seed=1) + _examples("b", seed=2)
    cfg = TrainConfig(epochs=epochs, batch_size=16, lr=0.05, lr_final=0.01, seed=3)
    return train_avm(corpus, cfg, SMALL_NET)


def test_learning_rate_schedule():
    """Test the linear decay between the first and the last epoch"""

    assert learning_rate(0.02, 0.002, 0, 10) == 0.02
    assert learning_rate(0.02, 0.002, 9, 10) == pytest.approx(0.002)
    assert learning_rate(0.02, 0.002, 0, 1) == 0.02


def test_sgd_solves_linear_regression():
    """Test that full-batch SGD reaches the exact least-squares solution"""

    rng = np.random.default_rng(0)
    inputs = rng.standard_normal((50, 3))
    targets = inputs @ np.array([[0.5], [-1.0], [2.0]]) + 0.25
    net = init_network(LayerSpec(3, (), 1), seed=0)
    cfg = TrainConfig(batch_size=50, lr=0.1, seed=0)
    loss = None
    for epoch in range(200):
        net, loss = sgd_epoch(net, inputs, targets, cfg, epoch)
    assert loss < 1e-6
    assert np.allclose(net.weights[0][:, 0], [0.5, -1.0, 2.0], atol=1e-3)
    assert net.biases[0][0] == pytest.approx(0.25, abs=1e-3)


def test_wide_network_memorizes_fifty_frames():
    """Test that the full-size topology fits 50 frames through its output layer"""

    rng = np.random.default_rng(3)
    inputs = rng.uniform(-1.0, 1.0, (50, 200))
    targets = rng.standard_normal((50, 1))
    net = init_network(LayerSpec.uniform(200, 6, 1024, 1), seed=0)
    cfg = TrainConfig(batch_size=50, lr=0.15, seed=0)
    loss = None
    for epoch in range(500):
        net, loss = sgd_epoch(net, inputs, targets, cfg, epoch, trainable={6})
    assert loss < 1e-3


def test_sgd_updates_selected_layers_only():
    """Test that frozen layers keep their parameters"""

    rng = np.random.default_rng(1)
    net = init_network(LayerSpec.uniform(3, 2, 5, 2), seed=1)
    cfg = TrainConfig(batch_size=8, lr=0.1)
    updated, _ = sgd_epoch(
        net, rng.standard_normal((20, 3)), rng.standard_normal((20, 2)), cfg, trainable={2}
    )
    assert np.array_equal(updated.weights[0], net.weights[0])
    assert np.array_equal(updated.weights[1], net.weights[1])
    assert not np.array_equal(updated.weights[2], net.weights[2])


def test_divergence_is_reported():
    """Test that a runaway learning rate stops training with an error"""

    rng = np.random.default_rng(2)
    net = init_network(LayerSpec(3, (), 1), seed=0)
    cfg = TrainConfig(batch_size=1, lr=1e6, shuffle=False)
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingDivergedError, match="learning rate"):
            for epoch in range(20):
                net, _ = sgd_epoch(net, rng.standard_normal((50, 3)), np.ones((50, 1)), cfg, epoch)


def test_trainable_layer_selection():
    """Test 'all' and 'top-k' layer selections"""

    assert trainable_layers(4, "all") == {0, 1, 2, 3}
    assert trainable_layers(4, "top-2") == {2, 3}
    assert trainable_layers(2, "top-5") == {0, 1}


def test_average_voice_needs_two_speakers():
    """Test that a single-speaker corpus is refused"""

    with pytest.raises(InsufficientDataError, match="two speakers"):
        train_avm(_examples("a"), TrainConfig(epochs=1), SMALL_NET)


def test_average_voice_training():
    """Test the trained network's conditioning, provenance and log"""

    result = _average_voice()
    net = result.net
    assert net.spec.dims == [4, 8, 2]
    assert net.input_schema == INPUT_COLUMNS
    assert net.output_schema == TARGET_COLUMNS
    assert net.output_stats.kind == "meanvar"
    assert net.provenance.epochs_trained == 3
    assert net.provenance.kind == "acoustic"
    assert net.parameters_finite()
    assert [r.epoch for r in result.log.records] == [1, 2, 3]
    assert result.log.records[-1].val_loss is not None
    assert result.log.to_csv().startswith("epoch,train_loss,val_loss\n")


def test_training_is_deterministic():
    """Test that identical seeds give identical networks"""

    first, second = _average_voice(2).net, _average_voice(2).net
    assert all(np.array_equal(a, b) for a, b in zip(first.weights, second.weights))
    assert first.provenance.corpus_digest == second.provenance.corpus_digest


def test_rebase_keeps_predictions():
    """Test that re-expressing the output layer leaves raw outputs unchanged"""

    net = _average_voice(1).net
    inputs = np.random.default_rng(4).uniform(-1.0, 1.0, (10, 4))
    stats = compute_stats([np.random.default_rng(5).normal(3.0, 4.0, (30, 2))], "meanvar")
    rebased = rebase_output(net, stats)
    assert rebased.output_stats is stats
    assert np.allclose(predict_raw(rebased, inputs), predict_raw(net, inputs))


def test_adaptation_lowers_target_loss():
    """Test that fine-tuning fits a shifted target speaker"""

    base = _average_voice(5).net
    target = _examples("c", n_utterances=5, offset=3.0, seed=6)
    result = adapt(
        base,
        target,
        AdaptConfig(lr_scale=1.0, epochs=20),
        TrainConfig(batch_size=16, lr=0.05, lr_final=0.01, seed=3),
    )
    assert result.adapted_val_loss <= 0.9 * result.base_val_loss
    assert result.net.provenance.epochs_trained == 25
    assert result.net.spec == base.spec


def test_adaptation_schema_mismatch():
    """Test that adaptation data must share the base model's layout"""

    base = _average_voice(1).net
    rng = np.random.default_rng(7)
    wrong = [
        UtteranceExample(
            "c_000", "c", FeatureMatrix(rng.normal(size=(5, 3)), ("x0", "x1", "z")),
            rng.normal(size=(5, 2)), TARGET_COLUMNS,
        )
    ]
    with pytest.raises(SchemaMismatchError, match="missing \\['x2', 'x3'\\]"):
        adapt(base, wrong)
    with pytest.raises(InsufficientDataError):
        adapt(base, [])


def test_duration_model():
    """Test duration training and whole-frame predictions"""

    rng = np.random.default_rng(8)
    corpus = []
    for index in range(6):
        inputs = rng.uniform(0.0, 1.0, (7, 3))
        frames = np.rint(5.0 + 20.0 * inputs[:, 0])
        corpus.append(
            UtteranceExample(
                f"u{index}", "a", FeatureMatrix(inputs, ("p0", "p1", "p2")), frames, ("frames",)
            )
        )
    cfg = TrainConfig(epochs=3, batch_size=8, lr=0.05, seed=1)
    net = train_duration_model(corpus, cfg, NetworkConfig(duration_hidden_layers=1, duration_hidden_width=4)).net
    assert net.provenance.kind == "duration"
    assert net.output_schema == ("log_frames",)
    predicted = predict_durations(net, corpus[0].inputs)
    assert predicted.shape == (7,)
    assert predicted.dtype == np.int64
    assert np.all(predicted >= 1)
    with pytest.raises(SchemaMismatchError):
        predict_durations(net, FeatureMatrix(np.zeros((2, 3)), ("q0", "q1", "q2")))


def test_clamp_durations():
    """Test rounding to whole frames with a one-frame minimum"""

    assert clamp_durations(np.array([0.2, 2.6, -3.0])).tolist() == [1, 3, 1]
