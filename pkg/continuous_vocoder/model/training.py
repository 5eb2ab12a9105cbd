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
"""Mini-batch SGD training, average-voice training and speaker adaptation"""

import csv
import hashlib
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from tqdm import tqdm

from continuous_vocoder.config import AdaptConfig, NetworkConfig, TrainConfig
from continuous_vocoder.errors import (
    InsufficientDataError,
    SchemaMismatchError,
    TrainingDivergedError,
)
from continuous_vocoder.features.linguistic import FeatureMatrix
from continuous_vocoder.features.normalization import (
    FeatureStats,
    compute_stats,
    denormalize,
    normalize,
)
from continuous_vocoder.fileio import atomic_write
from continuous_vocoder.model.network import (
    LayerSpec,
    Network,
    Provenance,
    forward,
    init_network,
    loss_and_gradients,
)

log = logging.getLogger(__name__)

HOLDOUT_FRACTION = 0.1


@dataclass(frozen=True)
class UtteranceExample:
    """Input features and raw targets of one utterance (or its phones)."""

    utt_id: str
    speaker: str
    inputs: FeatureMatrix
    targets: np.ndarray
    target_columns: Tuple[str, ...]
    split: str = "train"

    def __post_init__(self) -> None:
        targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if targets.shape[0] == 1 and len(self.inputs) != 1:
            targets = targets.T
        if targets.shape != (len(self.inputs), len(self.target_columns)):
            raise SchemaMismatchError(
                f"{self.utt_id}: {len(self.inputs)} input rows but targets of shape "
                f"{targets.shape} for {len(self.target_columns)} columns"
            )
        object.__setattr__(self, "targets", targets)


@dataclass(frozen=True)
class EpochRecord:
    """Losses after one epoch."""

    epoch: int
    train_loss: float
    val_loss: Optional[float] = None


@dataclass
class TrainingLog:
    """Per-epoch losses, written as CSV."""

    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        """Add one epoch."""
        self.records.append(record)

    def to_csv(self) -> str:
        """CSV text with an epoch,train_loss,val_loss header."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for record in self.records:
            val = "" if record.val_loss is None else repr(record.val_loss)
            writer.writerow([record.epoch, repr(record.train_loss), val])
        return buffer.getvalue()

    def save(self, path: Union[str, Path]) -> None:
        """Write the CSV atomically."""
        atomic_write(path, self.to_csv().encode("utf-8"))


@dataclass(frozen=True)
class TrainingResult:
    """A trained network and its loss history."""

    net: Network
    log: TrainingLog


@dataclass(frozen=True)
class AdaptationResult:
    """An adapted network with validation loss before and after fine-tuning."""

    net: Network
    base_val_loss: float
    adapted_val_loss: float
    log: TrainingLog


def learning_rate(start: float, final: float, epoch: int, epochs: int) -> float:
    """Linear decay from `start` at the first epoch to `final` at the last."""
    if epochs <= 1:
        return start
    return start + (final - start) * epoch / (epochs - 1)


def sgd_epoch(
    net: Network,
    inputs: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
    epoch: int = 0,
    lr: Optional[float] = None,
    trainable: Optional[Set[int]] = None,
) -> Tuple[Network, float]:
    """
    One pass of mini-batch SGD over normalized `inputs` and `targets`.

    Rows are shuffled with a generator seeded by (seed, epoch); the last
    batch may be short. Only layers in `trainable` are updated (all when
    None). Returns the updated network and the row-weighted mean loss.
    """
    lr = cfg.lr if lr is None else lr
    n_rows = inputs.shape[0]
    order = np.arange(n_rows)
    if cfg.shuffle:
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n_rows)
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    layers = range(net.n_layers) if trainable is None else sorted(trainable)
    current = net
    total = 0.0
    for batch, start in enumerate(range(0, n_rows, cfg.batch_size)):
        rows = order[start : start + cfg.batch_size]
        loss, weight_grads, bias_grads = loss_and_gradients(current, inputs[rows], targets[rows])
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"loss became non-finite at epoch {epoch + 1}, batch {batch + 1} "
                f"(learning rate {lr}); lower the learning rate"
            )
        total += loss * rows.shape[0]
        if lr:
            for layer in layers:
                weights[layer] -= lr * weight_grads[layer]
                biases[layer] -= lr * bias_grads[layer]
            current = net.with_parameters(weights, biases)
    return current, total / max(n_rows, 1)


def corpus_digest(examples: Sequence[UtteranceExample]) -> str:
    """SHA-256 over utterance ids, inputs and targets."""
    digest = hashlib.sha256()
    for example in examples:
        digest.update(example.utt_id.encode("utf-8"))
        digest.update(example.inputs.values.tobytes())
        digest.update(example.targets.tobytes())
    return digest.hexdigest()


def split_examples(
    examples: Sequence[UtteranceExample],
) -> Tuple[List[UtteranceExample], List[UtteranceExample]]:
    """
    Training and validation utterances: the 'train' and 'dev' splits, or
    a held-out tail of the training utterances when no dev split exists.
    """
    train = [e for e in examples if e.split == "train"] or list(examples)
    dev = [e for e in examples if e.split == "dev"]
    if not dev and len(train) > 1:
        held = max(1, int(round(HOLDOUT_FRACTION * len(train))))
        train, dev = train[:-held], train[-held:]
    return train, dev


def _stack(examples: Sequence[UtteranceExample]) -> Tuple[np.ndarray, np.ndarray]:
    return (
        np.vstack([e.inputs.values for e in examples]),
        np.vstack([e.targets for e in examples]),
    )


def predict_raw(net: Network, inputs: np.ndarray) -> np.ndarray:
    """Network outputs for raw inputs, mapped back to raw target units."""
    if net.input_stats is not None:
        inputs = normalize(inputs, net.input_stats)
    outputs = forward(net, inputs)
    return outputs if net.output_stats is None else denormalize(outputs, net.output_stats)


def validation_loss(
    net: Network, examples: Sequence[UtteranceExample], reference: FeatureStats
) -> float:
    """Mean squared error measured in the space normalized by `reference`."""
    if not examples:
        return float("nan")
    inputs, targets = _stack(examples)
    predicted = normalize(predict_raw(net, inputs), reference)
    return float(np.mean((predicted - normalize(targets, reference)) ** 2))


def _fit(
    net: Network,
    train: Sequence[UtteranceExample],
    dev: Sequence[UtteranceExample],
    cfg: TrainConfig,
    epochs: int,
    lr: float,
    lr_final: float,
    trainable: Optional[Set[int]] = None,
    label: str = "training",
) -> Tuple[Network, TrainingLog]:
    inputs, targets = _stack(train)
    inputs = normalize(inputs, net.input_stats)
    targets = normalize(targets, net.output_stats)
    history = TrainingLog()
    for epoch in tqdm(range(epochs), desc=label, disable=None):
        rate = learning_rate(lr, lr_final, epoch, epochs)
        net, train_loss = sgd_epoch(net, inputs, targets, cfg, epoch, rate, trainable)
        val_loss = validation_loss(net, dev, net.output_stats) if dev else None
        history.append(EpochRecord(epoch + 1, train_loss, val_loss))
        log.info(
            "%s epoch %d/%d: train %.6f, val %s (lr %.5f)",
            label, epoch + 1, epochs, train_loss,
            "-" if val_loss is None else f"{val_loss:.6f}", rate,
        )
    return net, history


def _initial_network(
    train: Sequence[UtteranceExample],
    spec: LayerSpec,
    cfg: TrainConfig,
    kind: str,
    digest: str,
) -> Network:
    inputs, targets = _stack(train)
    net = init_network(spec, cfg.seed)
    return replace(
        net,
        input_stats=compute_stats([inputs], "minmax"),
        output_stats=compute_stats([targets], "meanvar"),
        input_schema=train[0].inputs.columns,
        output_schema=train[0].target_columns,
        provenance=Provenance(cfg.seed, 0, digest, kind),
    )


def _check_schema(examples: Sequence[UtteranceExample]) -> None:
    first = examples[0]
    for example in examples[1:]:
        if example.inputs.columns != first.inputs.columns or example.target_columns != first.target_columns:
            raise SchemaMismatchError(
                f"{example.utt_id} does not share the feature layout of {first.utt_id}"
            )


def _layer_spec(input_dim: int, output_dim: int, layers: int, width: int, activation: str) -> LayerSpec:
    return LayerSpec.uniform(input_dim, layers, width, output_dim, activation)


def train_avm(
    corpus: Sequence[UtteranceExample],
    cfg: TrainConfig = None,
    network_cfg: NetworkConfig = None,
    spec: LayerSpec = None,
) -> TrainingResult:
    """
    Train the average voice model on the pooled frames of every speaker.

    Input statistics are min-max, output statistics mean-variance, both
    from the pooled training utterances.
    """
    cfg = cfg or TrainConfig()
    network_cfg = network_cfg or NetworkConfig()
    speakers = {e.speaker for e in corpus}
    if len(speakers) < 2:
        raise InsufficientDataError(
            f"average voice training needs at least two speakers, got {len(speakers)}"
        )
    _check_schema(corpus)
    train, dev = split_examples(corpus)
    spec = spec or _layer_spec(
        train[0].inputs.width, len(train[0].target_columns),
        network_cfg.hidden_layers, network_cfg.hidden_width, network_cfg.activation,
    )
    net = _initial_network(train, spec, cfg, "acoustic", corpus_digest(corpus))
    log.info(
        "training average voice on %d speakers, %d utterances (%d validation)",
        len(speakers), len(train), len(dev),
    )
    net, history = _fit(net, train, dev, cfg, cfg.epochs, cfg.lr, cfg.lr_final, label="avm")
    net = replace(net, provenance=replace(net.provenance, epochs_trained=cfg.epochs))
    return TrainingResult(net, history)


def trainable_layers(n_layers: int, selection: str) -> Set[int]:
    """Layer indices selected by 'all' or 'top-k'."""
    if selection == "all":
        return set(range(n_layers))
    count = min(int(selection.split("-", 1)[1]), n_layers)
    return set(range(n_layers - count, n_layers))


def rebase_output(net: Network, stats: FeatureStats) -> Network:
    """
    Re-express the output layer under new mean-variance statistics so the
    raw predictions stay the same.
    """
    old = net.output_stats
    old_scale = np.where(old.constant, 1.0, old.scale)
    old_offset = np.where(old.constant, 0.0, old.offset)
    new_scale = np.where(stats.constant, 1.0, stats.scale)
    new_offset = np.where(stats.constant, 0.0, stats.offset)
    weights = list(net.weights)
    biases = list(net.biases)
    weights[-1] = weights[-1] * (old_scale / new_scale)
    biases[-1] = (biases[-1] * old_scale + old_offset - new_offset) / new_scale
    return replace(net.with_parameters(weights, biases), output_stats=stats)


def _schema_diff(expected: Sequence[str], found: Sequence[str]) -> str:
    missing = [c for c in expected if c not in set(found)]
    extra = [c for c in found if c not in set(expected)]
    return (
        f"expected {len(expected)} columns, found {len(found)}; "
        f"missing {missing[:5]}{'...' if len(missing) > 5 else ''}, "
        f"unexpected {extra[:5]}{'...' if len(extra) > 5 else ''}"
    )


def adapt(
    base: Network,
    corpus: Sequence[UtteranceExample],
    cfg: AdaptConfig = None,
    train_cfg: TrainConfig = None,
) -> AdaptationResult:
    """
    Fine-tune `base` on one target speaker.

    Output statistics are recomputed on the target speaker's training
    utterances; the selected layers are trained at lr * lr_scale. Both
    validation losses are measured in the target-normalized space.
    """
    cfg = cfg or AdaptConfig()
    train_cfg = train_cfg or TrainConfig()
    if not corpus:
        raise InsufficientDataError("adaptation needs at least one target utterance")
    _check_schema(corpus)
    if corpus[0].inputs.columns != base.input_schema:
        raise SchemaMismatchError(
            "input features do not match the base model: "
            + _schema_diff(base.input_schema, corpus[0].inputs.columns)
        )
    if corpus[0].target_columns != base.output_schema:
        raise SchemaMismatchError(
            "output streams do not match the base model: "
            + _schema_diff(base.output_schema, corpus[0].target_columns)
        )
    train, dev = split_examples(corpus)
    target_stats = compute_stats([_stack(train)[1]], "meanvar")
    evaluation = dev or train
    base_loss = validation_loss(base, evaluation, target_stats)
    net = rebase_output(base, target_stats)
    net, history = _fit(
        net, train, dev, train_cfg, cfg.epochs,
        train_cfg.lr * cfg.lr_scale, train_cfg.lr_final * cfg.lr_scale,
        trainable_layers(net.n_layers, cfg.layers_to_update), label="adapt",
    )
    adapted_loss = validation_loss(net, evaluation, target_stats)
    net = replace(
        net,
        provenance=replace(
            net.provenance,
            epochs_trained=base.provenance.epochs_trained + cfg.epochs,
            corpus_digest=corpus_digest(corpus),
        ),
    )
    log.info("adaptation validation loss %.6f -> %.6f", base_loss, adapted_loss)
    return AdaptationResult(net, base_loss, adapted_loss, history)


def train_duration_model(
    corpus: Sequence[UtteranceExample],
    cfg: TrainConfig = None,
    network_cfg: NetworkConfig = None,
    spec: LayerSpec = None,
) -> TrainingResult:
    """
    Train the phone duration network; targets are log frame counts.

    `corpus` carries phone-level features and durations in frames.
    """
    cfg = cfg or TrainConfig()
    network_cfg = network_cfg or NetworkConfig()
    if not corpus:
        raise InsufficientDataError("duration training needs at least one utterance")
    logged = [
        replace(e, targets=np.log(np.maximum(e.targets, 1.0)), target_columns=("log_frames",))
        for e in corpus
    ]
    _check_schema(logged)
    train, dev = split_examples(logged)
    spec = spec or _layer_spec(
        train[0].inputs.width, 1,
        network_cfg.duration_hidden_layers, network_cfg.duration_hidden_width,
        network_cfg.activation,
    )
    net = _initial_network(train, spec, cfg, "duration", corpus_digest(logged))
    net, history = _fit(net, train, dev, cfg, cfg.epochs, cfg.lr, cfg.lr_final, label="duration")
    net = replace(net, provenance=replace(net.provenance, epochs_trained=cfg.epochs))
    return TrainingResult(net, history)


def clamp_durations(frames: np.ndarray) -> np.ndarray:
    """Round predicted durations to whole frames, at least one each."""
    return np.maximum(np.rint(np.asarray(frames, dtype=np.float64)), 1.0).astype(np.int64)


def predict_durations(net: Network, features: FeatureMatrix) -> np.ndarray:
    """Durations in frames for every phone row of `features`."""
    if features.columns != net.input_schema:
        raise SchemaMismatchError(
            "duration features do not match the model: "
            + _schema_diff(net.input_schema, features.columns)
        )
    return clamp_durations(np.exp(predict_raw(net, features.values)[:, 0]))
