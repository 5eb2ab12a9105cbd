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
"""Corpus manifests"""

import csv
import io
import logging
from collections import OrderedDict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from continuous_vocoder.errors import ManifestError
from continuous_vocoder.fileio import atomic_write

log = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("utt_id", "speaker", "wav", "alignment", "split")
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class CorpusEntry:
    """One utterance of a corpus."""

    utt_id: str
    speaker: str
    wav: Path
    alignment: Optional[Path] = None
    split: str = ""


def _resolve(value: str, root: Path) -> Optional[Path]:
    if not value:
        return None
    path = Path(value)
    return path if path.is_absolute() else root / path


def read_manifest(path: Union[str, Path], root: Union[str, Path, None] = None) -> List[CorpusEntry]:
    """
    Read a CSV manifest with utt_id, speaker, wav, alignment and split
    columns. Relative paths are resolved against `root`, defaulting to
    the manifest's directory; blank splits are assigned later.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"no such manifest: {path}")
    root = Path(root) if root else path.parent
    with open(path, encoding="utf-8", newline="") as manifest_file:
        reader = csv.DictReader(manifest_file)
        missing = set(MANIFEST_COLUMNS[:3]) - set(reader.fieldnames or ())
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        entries = []
        seen = set()
        for number, row in enumerate(reader, 2):
            utt_id = (row.get("utt_id") or "").strip()
            if not utt_id:
                raise ManifestError(f"{path}: line {number}: empty utt_id")
            if utt_id in seen:
                raise ManifestError(f"{path}: line {number}: duplicate utt_id '{utt_id}'")
            seen.add(utt_id)
            split = (row.get("split") or "").strip()
            if split and split not in SPLITS:
                raise ManifestError(f"{path}: line {number}: unknown split '{split}'")
            entries.append(
                CorpusEntry(
                    utt_id,
                    (row.get("speaker") or "").strip(),
                    _resolve((row.get("wav") or "").strip(), root),
                    _resolve((row.get("alignment") or "").strip(), root),
                    split,
                )
            )
    if not entries:
        raise ManifestError(f"{path}: no entries")
    return entries


def write_manifest(path: Union[str, Path], entries: Sequence[CorpusEntry]) -> None:
    """Write entries with paths relative to the manifest's directory when possible."""
    path = Path(path)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)

    def relative(value: Optional[Path]) -> str:
        if value is None:
            return ""
        try:
            return Path(value).relative_to(path.parent).as_posix()
        except ValueError:
            return str(value)

    for entry in entries:
        writer.writerow([entry.utt_id, entry.speaker, relative(entry.wav), relative(entry.alignment), entry.split])
    atomic_write(path, buffer.getvalue().encode("utf-8"))


def assign_splits(
    entries: Sequence[CorpusEntry], train: float = 0.9, dev: float = 0.05
) -> List[CorpusEntry]:
    """
    Fill blank splits per speaker in manifest order: the first share goes
    to train, the next to dev and the rest to test. Each speaker with at
    least three blank entries gets one dev and one test utterance.
    """
    by_speaker: Dict[str, List[int]] = OrderedDict()
    for index, entry in enumerate(entries):
        if not entry.split:
            by_speaker.setdefault(entry.speaker, []).append(index)
    result = list(entries)
    for indices in by_speaker.values():
        count = len(indices)
        n_train = int(round(train * count))
        n_dev = int(round(dev * count))
        if count >= 3:
            n_dev = max(n_dev, 1)
            n_train = min(n_train, count - n_dev - 1)
        for position, index in enumerate(indices):
            split = "train" if position < n_train else "dev" if position < n_train + n_dev else "test"
            result[index] = replace(result[index], split=split)
    return result


def speakers_of(entries: Sequence[CorpusEntry]) -> List[str]:
    """Speakers in order of first appearance."""
    return list(OrderedDict.fromkeys(e.speaker for e in entries))
