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
"""Corpus-level steps shared by the command line: analysis, training and adaptation"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from continuous_vocoder.analysis.residual import build_speaker_prototype
from continuous_vocoder.config import ProjectConfig
from continuous_vocoder.corpus.manifest import CorpusEntry, speakers_of
from continuous_vocoder.errors import ContinuousVocoderError, InsufficientDataError
from continuous_vocoder.features.alignment import PhoneInventory
from continuous_vocoder.model.dataset import (
    acoustic_example,
    collect_examples,
    duration_example,
    prototype_path,
    stream_base,
)
from continuous_vocoder.model.modelio import save_network
from continuous_vocoder.model.network import Network
from continuous_vocoder.model.training import (
    AdaptationResult,
    TrainingResult,
    UtteranceExample,
    adapt,
    train_avm,
    train_duration_model,
)
from continuous_vocoder.signal.wavio import read_wav
from continuous_vocoder.streams import save_param_track, save_prototype
from continuous_vocoder.synthesis.vocoder import analyze

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_PARTIAL = 2

Failure = Tuple[str, str]


@dataclass
class StepOutcome:
    """What a corpus step produced and which entries failed."""

    written: List[Path] = field(default_factory=list)
    failures: List[Failure] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        """0 when nothing failed, 2 when some entries failed, 1 when nothing was written."""
        if not self.failures:
            return EXIT_OK
        return EXIT_PARTIAL if self.written else EXIT_FAILED


def _analyze_entry(
    entry: CorpusEntry, config: ProjectConfig, streams_dir: Path
) -> Union[Tuple[Path, np.ndarray], Failure]:
    try:
        result = analyze(read_wav(entry.wav), config, build_prototype=False)
        base = stream_base(streams_dir, entry)
        save_param_track(base, result.params)
        return base, result.cycles
    except ContinuousVocoderError as error:
        return entry.utt_id, f"{entry.wav}: {error}"


def analyze_corpus(
    entries: Sequence[CorpusEntry],
    config: ProjectConfig,
    streams_dir: Union[str, Path],
    jobs: int = 1,
) -> StepOutcome:
    """
    Write the lf0/mvf/mgc streams of every entry under
    `streams_dir/<speaker>/` and one residual prototype per speaker,
    pooled from all of that speaker's residual cycles.
    """
    streams_dir = Path(streams_dir)
    worker = partial(_analyze_entry, config=config, streams_dir=streams_dir)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, entries))
    else:
        results = [worker(e) for e in tqdm(entries, desc="analyze", disable=None)]
    outcome = StepOutcome()
    cycles: Dict[str, List[np.ndarray]] = {}
    for entry, result in zip(entries, results):
        if isinstance(result[0], Path):
            outcome.written.append(result[0])
            cycles.setdefault(entry.speaker, []).append(result[1])
        else:
            log.error("analysis failed for %s", result[1])
            outcome.failures.append(result)
    for speaker, speaker_cycles in cycles.items():
        try:
            prototype = build_speaker_prototype(speaker_cycles, config.excitation.min_cycles)
        except ContinuousVocoderError as error:
            log.error("no prototype for speaker %s: %s", speaker, error)
            outcome.failures.append((speaker, str(error)))
            continue
        path = prototype_path(streams_dir, speaker)
        save_prototype(path, prototype)
        outcome.written.append(path)
        log.info(
            "speaker %s: prototype from %d cycles, energy share %.3f",
            speaker, prototype.source_cycle_count, prototype.energy_share,
        )
    return outcome


def select_speakers(entries: Sequence[CorpusEntry], speakers: Sequence[str]) -> List[CorpusEntry]:
    """Entries of the listed speakers; every entry when the list is empty."""
    if not speakers:
        return list(entries)
    wanted = set(speakers)
    missing = wanted - set(speakers_of(entries))
    if missing:
        raise InsufficientDataError(f"speakers not in the manifest: {sorted(missing)}")
    return [e for e in entries if e.speaker in wanted]


def acoustic_examples(
    entries: Sequence[CorpusEntry],
    streams_dir: Union[str, Path],
    inventory: PhoneInventory,
    config: ProjectConfig,
) -> Tuple[List[UtteranceExample], List[Failure]]:
    """Frame-level examples of the entries whose streams and alignments load."""
    return collect_examples(
        entries, partial(acoustic_example, streams_dir=streams_dir, inventory=inventory, config=config)
    )


def duration_examples(
    entries: Sequence[CorpusEntry], inventory: PhoneInventory, config: ProjectConfig
) -> Tuple[List[UtteranceExample], List[Failure]]:
    """Phone-level examples of the entries whose alignments load."""
    return collect_examples(entries, partial(duration_example, inventory=inventory, config=config))


def _save_training(result: TrainingResult, model_path: Path) -> List[Path]:
    save_network(model_path, result.net)
    log_path = model_path.with_suffix(".log.csv")
    result.log.save(log_path)
    return [model_path, log_path]


def _require(examples: Sequence[UtteranceExample], what: str) -> None:
    if not examples:
        raise InsufficientDataError(f"no usable utterances for {what}")


def train_avm_step(
    entries: Sequence[CorpusEntry],
    streams_dir: Union[str, Path],
    inventory: PhoneInventory,
    config: ProjectConfig,
    model_path: Union[str, Path],
) -> StepOutcome:
    """Train the average voice model on the configured AVM speakers."""
    entries = select_speakers(entries, config.corpus.avm_speakers)
    examples, failures = acoustic_examples(entries, streams_dir, inventory, config)
    _require(examples, "average voice training")
    result = train_avm(examples, config.training, config.network)
    outcome = StepOutcome(failures=failures)
    outcome.written.extend(_save_training(result, Path(model_path)))
    return outcome


def train_duration_step(
    entries: Sequence[CorpusEntry],
    inventory: PhoneInventory,
    config: ProjectConfig,
    model_path: Union[str, Path],
) -> StepOutcome:
    """Train the duration model on the configured AVM speakers."""
    entries = select_speakers(entries, config.corpus.avm_speakers)
    examples, failures = duration_examples(entries, inventory, config)
    _require(examples, "duration training")
    result = train_duration_model(examples, config.training, config.network)
    outcome = StepOutcome(failures=failures)
    outcome.written.extend(_save_training(result, Path(model_path)))
    return outcome


def adapt_step(
    base: Network,
    entries: Sequence[CorpusEntry],
    streams_dir: Union[str, Path],
    inventory: PhoneInventory,
    config: ProjectConfig,
    out_dir: Union[str, Path],
    speakers: Sequence[str] = (),
) -> Tuple[StepOutcome, Dict[str, AdaptationResult]]:
    """
    Adapt `base` to every target speaker separately, writing
    `<out_dir>/<speaker>.cvdn` and its loss log. A speaker that fails is
    recorded and the others still run.
    """
    out_dir = Path(out_dir)
    speakers = list(speakers or config.corpus.adapt_speakers or speakers_of(entries))
    outcome = StepOutcome()
    results: Dict[str, AdaptationResult] = {}
    for speaker in speakers:
        try:
            examples, failures = acoustic_examples(
                select_speakers(entries, [speaker]), streams_dir, inventory, config
            )
            outcome.failures.extend((f"{speaker}/{utt}", message) for utt, message in failures)
            _require(examples, f"adapting to {speaker}")
            result = adapt(base, examples, config.adaptation, config.training)
        except ContinuousVocoderError as error:
            log.error("adaptation to %s failed: %s", speaker, error)
            outcome.failures.append((speaker, str(error)))
            continue
        results[speaker] = result
        model_path = out_dir / f"{speaker}.cvdn"
        save_network(model_path, result.net)
        log_path = out_dir / f"{speaker}.log.csv"
        result.log.save(log_path)
        outcome.written.extend([model_path, log_path])
        log.info(
            "adapted to %s: validation loss %.6f -> %.6f",
            speaker, result.base_val_loss, result.adapted_val_loss,
        )
    return outcome, results
