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
"""Training examples assembled from a manifest, alignments and analysed streams"""

import logging
from pathlib import Path
from typing import Callable, List, Sequence, Tuple, Union

from continuous_vocoder.config import ProjectConfig
from continuous_vocoder.corpus.manifest import CorpusEntry
from continuous_vocoder.errors import ContinuousVocoderError, ManifestError
from continuous_vocoder.features.alignment import PhoneInventory, parse_alignment
from continuous_vocoder.features.linguistic import (
    duration_schema,
    duration_targets,
    encode_duration_features,
    encode_linguistic_features,
)
from continuous_vocoder.model.inference import acoustic_columns, acoustic_targets
from continuous_vocoder.model.training import UtteranceExample
from continuous_vocoder.signal.models import FrameGrid
from continuous_vocoder.streams import load_param_track

log = logging.getLogger(__name__)


def stream_base(streams_dir: Union[str, Path], entry: CorpusEntry) -> Path:
    """Base path of an utterance's analysed streams."""
    return Path(streams_dir) / entry.speaker / entry.utt_id


def prototype_path(streams_dir: Union[str, Path], speaker: str) -> Path:
    """Location of a speaker's residual prototype."""
    return Path(streams_dir) / speaker / f"{speaker}.cvrp"


def _alignment(entry: CorpusEntry):
    if entry.alignment is None:
        raise ManifestError(f"{entry.utt_id}: no alignment listed")
    return parse_alignment(entry.alignment, entry.utt_id, entry.speaker)


def acoustic_example(
    entry: CorpusEntry, streams_dir: Union[str, Path], inventory: PhoneInventory, config: ProjectConfig
) -> UtteranceExample:
    """Frame features paired with the utterance's analysed streams."""
    utterance = _alignment(entry)
    params = load_param_track(stream_base(streams_dir, entry))
    if params.mgc.order != config.spectral.order:
        raise ManifestError(
            f"{entry.utt_id}: streams have order {params.mgc.order}, "
            f"configuration expects {config.spectral.order}"
        )
    frame_len = int(round(config.signal.window_ms * 1e-3 * params.sample_rate))
    grid = FrameGrid(params.hop, frame_len, params.n_frames, params.sample_rate)
    features = encode_linguistic_features(utterance, inventory, grid, config.network.context)
    overhang = grid.n_frames * grid.hop_seconds - utterance.total_duration
    if overhang > 2 * grid.hop_seconds:
        log.warning(
            "%s: %d frames lie beyond the alignment and reuse its last phone",
            entry.utt_id,
            int(overhang / grid.hop_seconds),
        )
    return UtteranceExample(
        entry.utt_id,
        entry.speaker,
        features,
        acoustic_targets(params),
        acoustic_columns(config.spectral.order),
        entry.split or "train",
    )


def duration_example(
    entry: CorpusEntry, inventory: PhoneInventory, config: ProjectConfig
) -> UtteranceExample:
    """Phone features paired with phone durations in frames."""
    utterance = _alignment(entry)
    features = encode_duration_features(utterance, inventory, config.network.context)
    if features.columns != duration_schema(inventory, config.network.context):
        raise ManifestError(f"{entry.utt_id}: unexpected duration feature layout")
    targets = duration_targets(utterance, config.hop / config.signal.sample_rate)
    return UtteranceExample(
        entry.utt_id, entry.speaker, features, targets, ("frames",), entry.split or "train"
    )


def collect_examples(
    entries: Sequence[CorpusEntry], build: Callable[[CorpusEntry], UtteranceExample]
) -> Tuple[List[UtteranceExample], List[Tuple[str, str]]]:
    """Build every example, collecting (utt_id, message) for the ones that fail."""
    examples, failures = [], []
    for entry in entries:
        try:
            examples.append(build(entry))
        except ContinuousVocoderError as error:
            log.warning("skipping %s: %s", entry.utt_id, error)
            failures.append((entry.utt_id, str(error)))
    return examples, failures
