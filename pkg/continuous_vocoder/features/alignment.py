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
"""Phone alignments and the phone inventory"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from continuous_vocoder.errors import AlignmentError, ManifestError, UnknownPhoneError
from continuous_vocoder.fileio import atomic_write

log = logging.getLogger(__name__)

EDGE = "<edge>"
GAP_TOLERANCE = 1e-3
OVERLAP_TOLERANCE = 1e-6


class AlignedPhone(NamedTuple):
    """One alignment entry; times in seconds."""

    phone: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.end - self.start


@dataclass(frozen=True)
class AlignedUtterance:
    """Contiguous phone segmentation of one utterance."""

    entries: Tuple[AlignedPhone, ...]
    utt_id: str = ""
    speaker: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def phones(self) -> List[str]:
        """Phone symbols in order."""
        return [entry.phone for entry in self.entries]

    @property
    def total_duration(self) -> float:
        """End time of the last entry."""
        return self.entries[-1].end if self.entries else 0.0


def _check_entries(entries: Sequence[AlignedPhone], line_numbers: Sequence[int]) -> None:
    previous_end = None
    for entry, number in zip(entries, line_numbers):
        if entry.start < 0:
            raise AlignmentError(f"negative start time {entry.start}", number)
        if entry.end <= entry.start:
            raise AlignmentError(
                f"end {entry.end} does not follow start {entry.start}", number
            )
        if previous_end is not None:
            if entry.start < previous_end - OVERLAP_TOLERANCE:
                raise AlignmentError(
                    f"'{entry.phone}' starts at {entry.start}, overlapping the previous "
                    f"entry ending at {previous_end}",
                    number,
                )
            if entry.start - previous_end > GAP_TOLERANCE:
                raise AlignmentError(
                    f"gap of {entry.start - previous_end:.4f} s before '{entry.phone}'",
                    number,
                )
        previous_end = entry.end


def parse_alignment(
    path: Union[str, Path], utt_id: Optional[str] = None, speaker: str = ""
) -> AlignedUtterance:
    """
    Read a `phone<TAB>start<TAB>end` alignment file.

    Blank lines are skipped. Entries must be contiguous: overlaps, gaps
    above one millisecond and non-increasing times are reported with the
    offending line number.
    """
    path = Path(path)
    if not path.is_file():
        raise AlignmentError(f"no such alignment file: {path}")
    entries: List[AlignedPhone] = []
    numbers: List[int] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3:
            raise AlignmentError(f"expected 'phone start end', got {line!r}", number)
        try:
            start, end = float(fields[1]), float(fields[2])
        except ValueError as error:
            raise AlignmentError(f"unparseable time in {line!r}", number) from error
        entries.append(AlignedPhone(fields[0], start, end))
        numbers.append(number)
    if not entries:
        raise AlignmentError(f"{path}: no entries")
    _check_entries(entries, numbers)
    return AlignedUtterance(tuple(entries), utt_id or path.stem, speaker)


def write_alignment(path: Union[str, Path], utterance: AlignedUtterance) -> None:
    """Write an utterance in the tab-separated alignment format."""
    lines = [f"{e.phone}\t{e.start:.6f}\t{e.end:.6f}" for e in utterance.entries]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def utterance_from_phones(
    phones: Sequence[str],
    frames_per_phone: Sequence[int],
    hop_seconds: float = 0.005,
    utt_id: str = "",
    speaker: str = "",
) -> AlignedUtterance:
    """Build an alignment from phone symbols and their durations in frames."""
    if len(phones) != len(frames_per_phone):
        raise AlignmentError(
            f"{len(phones)} phones but {len(frames_per_phone)} durations"
        )
    if not phones:
        raise AlignmentError("no entries")
    entries = []
    frame = 0
    for phone, count in zip(phones, frames_per_phone):
        count = max(int(count), 1)
        entries.append(
            AlignedPhone(phone, frame * hop_seconds, (frame + count) * hop_seconds)
        )
        frame += count
    return AlignedUtterance(tuple(entries), utt_id, speaker)


@dataclass(frozen=True)
class PhoneInventory:
    """
    Ordered phone symbols. The reserved edge symbol always sits at
    index 0 and stands for context positions outside the utterance.
    """

    symbols: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        symbols = tuple(s for s in self.symbols if s != EDGE)
        if not symbols:
            raise ValueError("a phone inventory needs at least one symbol")
        if len(set(symbols)) != len(symbols):
            raise ValueError("phone inventory symbols must be unique")
        symbols = (EDGE,) + symbols
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def index(self, symbol: str) -> int:
        """Position of `symbol`; unknown symbols raise UnknownPhoneError."""
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownPhoneError(symbol) from None

    @classmethod
    def from_utterances(cls, utterances: Iterable[AlignedUtterance]) -> "PhoneInventory":
        """Sorted inventory of every phone used in `utterances`."""
        return cls(tuple(sorted({p for u in utterances for p in u.phones})))


def load_inventory(path: Union[str, Path]) -> PhoneInventory:
    """Read one symbol per line."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"no such inventory file: {path}")
    symbols = [
        line.strip()
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    return PhoneInventory(tuple(symbols))


def save_inventory(path: Union[str, Path], inventory: PhoneInventory) -> None:
    """Write one symbol per line, edge symbol excluded."""
    atomic_write(path, ("\n".join(inventory.symbols[1:]) + "\n").encode("utf-8"))
