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
"""Corpus-level objective evaluation and dev/test report tables"""

import csv
import io
import logging
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from jinja2 import Template
from tqdm import tqdm

from continuous_vocoder.analysis.f0 import track_f0_continuous
from continuous_vocoder.analysis.mgc import mgc_analyze
from continuous_vocoder.analysis.models import F0Track, MgcTrack
from continuous_vocoder.config import ProjectConfig
from continuous_vocoder.errors import ContinuousVocoderError, ManifestError
from continuous_vocoder.evaluation.metrics import align_tracks, f0_corr, mcd
from continuous_vocoder.fileio import atomic_write
from continuous_vocoder.signal.framing import frame_grid
from continuous_vocoder.signal.resampling import resample
from continuous_vocoder.signal.wavio import read_wav
from continuous_vocoder.streams import load_param_track

log = logging.getLogger(__name__)

DEFAULT_SYSTEM = "Continuous vocoder"
EVAL_COLUMNS = ("ref", "syn", "speaker", "split")
REPORT_SPLITS = ("dev", "test")

DEFAULT_TEMPLATE = """
{#-

  Jinja2 Template for the dev/test metric tables
-#}
{% for table in tables -%}
{{ table.title }}
| Speaker |{% for system in systems %} {{ system }} |{% endfor %}
|---------|{% for system in systems %}{{ "-" * (system|length + 2) }}|{% endfor %}
{% for row in table.rows -%}
| {{ row.speaker }} |{% for cell in row.cells %} {{ cell }} |{% endfor %}
{% endfor %}
{% endfor -%}
"""


@dataclass(frozen=True)
class EvalEntry:
    """One reference / synthesized pair to score."""

    ref: Path
    syn: Path
    speaker: str
    split: str
    system: str = DEFAULT_SYSTEM

    @property
    def utt_id(self) -> str:
        """Identifier taken from the reference file name."""
        return self.ref.stem


@dataclass(frozen=True)
class UtteranceScore:
    """Metrics of one utterance."""

    utt_id: str
    speaker: str
    split: str
    system: str
    mcd_db: float
    f0_corr: float
    dropped_frames: int = 0


@dataclass(frozen=True)
class FailedEntry:
    """An entry that could not be scored."""

    utt_id: str
    speaker: str
    split: str
    system: str
    error: str


@dataclass
class EvalReport:
    """Per-utterance scores, failures and per speaker x split means."""

    scores: List[UtteranceScore] = field(default_factory=list)
    failures: List[FailedEntry] = field(default_factory=list)

    @property
    def status(self) -> str:
        """'complete', 'partial' or 'failed'."""
        if not self.failures:
            return "complete"
        return "partial" if self.scores else "failed"

    @property
    def systems(self) -> List[str]:
        """Systems in order of first appearance."""
        return list(OrderedDict.fromkeys(s.system for s in self.scores))

    @property
    def speakers(self) -> List[str]:
        """Speakers in order of first appearance."""
        return list(OrderedDict.fromkeys(s.speaker for s in self.scores))

    def aggregates(self) -> Dict[Tuple[str, str, str], Tuple[float, float, int]]:
        """(system, speaker, split) -> (mean MCD, mean F0-CORR, utterance count)."""
        groups: Dict[Tuple[str, str, str], List[UtteranceScore]] = OrderedDict()
        for score in self.scores:
            groups.setdefault((score.system, score.speaker, score.split), []).append(score)
        return {
            key: (
                float(np.mean([s.mcd_db for s in members])),
                float(np.mean([s.f0_corr for s in members])),
                len(members),
            )
            for key, members in groups.items()
        }

    def to_csv(self) -> str:
        """One row per manifest entry; failed rows carry the error."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["utt_id", "speaker", "split", "system", "mcd", "f0_corr", "dropped_frames", "error"])
        for s in self.scores:
            writer.writerow([s.utt_id, s.speaker, s.split, s.system, repr(s.mcd_db), repr(s.f0_corr), s.dropped_frames, ""])
        for f in self.failures:
            writer.writerow([f.utt_id, f.speaker, f.split, f.system, "", "", "", f.error])
        return buffer.getvalue()

    def aggregates_csv(self) -> str:
        """One row per system, speaker and split with the means shown in the tables."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["system", "speaker", "split", "mcd", "f0_corr", "count"])
        for (system, speaker, split), (mcd_mean, corr_mean, count) in self.aggregates().items():
            writer.writerow([system, speaker, split, f"{mcd_mean:.3f}", f"{corr_mean:.3f}", count])
        return buffer.getvalue()

    def to_table(self, template_file: Optional[str] = None) -> str:
        """Render the MCD and F0-CORR tables with one "dev / test" cell per system."""
        if template_file is not None:
            with open(template_file, encoding="utf-8") as template_handle:
                template_obj = Template(template_handle.read())
        else:
            template_obj = Template(DEFAULT_TEMPLATE)
        aggregates = self.aggregates()

        def cell(system: str, speaker: str, metric: int) -> str:
            values = []
            for split in REPORT_SPLITS:
                found = aggregates.get((system, speaker, split))
                values.append("-" if found is None else f"{found[metric]:.3f}")
            return " / ".join(values)

        tables = [
            {
                "title": title,
                "rows": [
                    {"speaker": speaker, "cells": [cell(system, speaker, metric) for system in self.systems]}
                    for speaker in self.speakers
                ],
            }
            for title, metric in (
                ("MCD errors on the dev/test sets.", 0),
                ("F0-CORR on the dev/test sets.", 1),
            )
        ]
        return template_obj.render(tables=tables, systems=self.systems)

    def save(self, out_dir: Union[str, Path]) -> Dict[str, Path]:
        """Write report.csv, report_aggregates.csv and report.txt."""
        out_dir = Path(out_dir)
        paths = {
            "csv": out_dir / "report.csv",
            "aggregates": out_dir / "report_aggregates.csv",
            "table": out_dir / "report.txt",
        }
        atomic_write(paths["csv"], self.to_csv().encode("utf-8"))
        atomic_write(paths["aggregates"], self.aggregates_csv().encode("utf-8"))
        atomic_write(paths["table"], self.to_table().encode("utf-8"))
        return paths


def read_eval_manifest(path: Union[str, Path]) -> List[EvalEntry]:
    """Read a ref,syn,speaker,split[,system] CSV; paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"no such evaluation manifest: {path}")
    entries = []
    with open(path, encoding="utf-8", newline="") as manifest_file:
        reader = csv.DictReader(manifest_file)
        missing = set(EVAL_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for number, row in enumerate(reader, 2):
            split = (row["split"] or "").strip()
            if split not in REPORT_SPLITS:
                raise ManifestError(f"{path}: line {number}: split must be dev or test, got '{split}'")
            ref, syn = Path(row["ref"].strip()), Path(row["syn"].strip())
            entries.append(
                EvalEntry(
                    ref if ref.is_absolute() else path.parent / ref,
                    syn if syn.is_absolute() else path.parent / syn,
                    row["speaker"].strip(),
                    split,
                    (row.get("system") or "").strip() or DEFAULT_SYSTEM,
                )
            )
    if not entries:
        raise ManifestError(f"{path}: no entries")
    return entries


def analyze_for_metrics(path: Path, config: ProjectConfig) -> Tuple[F0Track, MgcTrack]:
    """F0 and MGC of a wav file, or the streams stored under a ParamTrack base path."""
    if path.suffix.lower() != ".wav":
        params = load_param_track(path)
        return params.f0, params.mgc
    waveform = resample(read_wav(path), config.signal.sample_rate)
    grid = frame_grid(waveform, config.signal.window_ms, config.signal.hop_ms)
    spectral = config.spectral
    f0 = track_f0_continuous(waveform, config.excitation, config.signal)
    mgc = mgc_analyze(waveform, grid, spectral.alpha, spectral.gamma, spectral.order, spectral)
    return f0, mgc


def score_entry(entry: EvalEntry, config: ProjectConfig) -> UtteranceScore:
    """Analyze both sides of an entry, align them and compute both metrics."""
    ref_f0, ref_mgc = analyze_for_metrics(entry.ref, config)
    syn_f0, syn_mgc = analyze_for_metrics(entry.syn, config)
    ref_mgc, syn_mgc, dropped = align_tracks(ref_mgc, syn_mgc)
    ref_f0, syn_f0, _ = align_tracks(ref_f0, syn_f0)
    evaluation = config.evaluation
    return UtteranceScore(
        entry.utt_id,
        entry.speaker,
        entry.split,
        entry.system,
        mcd(ref_mgc, syn_mgc, evaluation.mcd_scaling, evaluation.skip_c0, evaluation.mcd_order),
        f0_corr(ref_f0, syn_f0, evaluation.exclude_unvoiced_reference),
        dropped,
    )


def _score_or_fail(entry: EvalEntry, config: ProjectConfig) -> Union[UtteranceScore, FailedEntry]:
    try:
        return score_entry(entry, config)
    except ContinuousVocoderError as error:
        return FailedEntry(entry.utt_id, entry.speaker, entry.split, entry.system, str(error))


def evaluate_corpus(
    entries: Sequence[EvalEntry], config: ProjectConfig = None, jobs: int = 1
) -> EvalReport:
    """
    Score every entry; failures are recorded in the report and never
    stop the run. Results keep manifest order whatever the job count.
    """
    config = config or ProjectConfig()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_score_or_fail, entries, repeat(config)))
    else:
        results = [_score_or_fail(e, config) for e in tqdm(entries, desc="evaluate", disable=None)]
    report = EvalReport()
    for result in results:
        if isinstance(result, FailedEntry):
            log.warning("could not score %s: %s", result.utt_id, result.error)
            report.failures.append(result)
        else:
            report.scores.append(result)
    log.info("scored %d of %d entries", len(report.scores), len(entries))
    return report
