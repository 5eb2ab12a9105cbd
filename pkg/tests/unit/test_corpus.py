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
"""Test corpus manifests and the synthetic corpus generator"""

from pathlib import Path

import pytest

from continuous_vocoder.corpus.manifest import (
    CorpusEntry,
    assign_splits,
    read_manifest,
    speakers_of,
    write_manifest,
)
from continuous_vocoder.corpus.synthetic import (
    SILENCE,
    generate_corpus,
    speaker_profiles,
    synthetic_inventory,
    synthetic_vowel,
)
from continuous_vocoder.errors import ManifestError
from continuous_vocoder.features.alignment import load_inventory, parse_alignment
from continuous_vocoder.signal.wavio import read_wav


def _entries(speaker, count):
    return [CorpusEntry(f"{speaker}_{i:03d}", speaker, Path(f"{speaker}_{i:03d}.wav")) for i in range(count)]


def test_assign_splits():
    """Test per-speaker splits with at least one dev and test utterance"""

    entries = assign_splits(_entries("a", 20) + _entries("b", 3))
    splits_a = [e.split for e in entries if e.speaker == "a"]
    splits_b = [e.split for e in entries if e.speaker == "b"]
    assert splits_a == ["train"] * 18 + ["dev", "test"]
    assert splits_b == ["train", "dev", "test"]
    preset = assign_splits([CorpusEntry("x", "c", Path("x.wav"), split="test")])
    assert preset[0].split == "test"


def test_manifest_file(tmp_path):
    """Test that written manifests read back with resolved paths"""

    entries = [
        CorpusEntry("u1", "spk01", tmp_path / "wav" / "u1.wav", tmp_path / "lab" / "u1.lab", "train"),
        CorpusEntry("u2", "spk02", tmp_path / "wav" / "u2.wav", None, ""),
    ]
    write_manifest(tmp_path / "manifest.csv", entries)
    text = (tmp_path / "manifest.csv").read_text(encoding="utf-8")
    assert text.splitlines()[1] == "u1,spk01,wav/u1.wav,lab/u1.lab,train"
    assert read_manifest(tmp_path / "manifest.csv") == entries
    assert speakers_of(entries) == ["spk01", "spk02"]


def test_manifest_errors(tmp_path):
    """Test duplicate ids, unknown splits and missing columns"""

    path = tmp_path / "m.csv"
    with pytest.raises(ManifestError):
        read_manifest(path)
    path.write_text("utt_id,speaker,wav\nu1,a,x.wav\nu1,a,y.wav\n", encoding="utf-8")
    with pytest.raises(ManifestError, match="line 3: duplicate"):
        read_manifest(path)
    path.write_text("utt_id,speaker,wav,split\nu1,a,x.wav,eval\n", encoding="utf-8")
    with pytest.raises(ManifestError, match="unknown split"):
        read_manifest(path)
    path.write_text("utt_id,wav\nu1,x.wav\n", encoding="utf-8")
    with pytest.raises(ManifestError, match="missing columns"):
        read_manifest(path)


def test_speaker_profiles_are_reproducible():
    """Test that profiles depend on the seed only"""

    assert speaker_profiles(3, 1) == speaker_profiles(3, 1)
    assert speaker_profiles(3, 1) != speaker_profiles(3, 2)
    assert [p.name for p in speaker_profiles(3)] == ["spk01", "spk02", "spk03"]


def test_synthetic_vowel():
    """Test the length and level of a synthetic vowel"""

    vowel = synthetic_vowel(0.5, 120.0, 90.0, vowel="i")
    assert len(vowel) == 8000
    assert abs(vowel.samples).max() == pytest.approx(0.6)


def test_generate_corpus(tmp_path):
    """Test the written corpus and its reproducibility"""

    manifest = generate_corpus(tmp_path / "a", n_speakers=2, n_utterances=3, seed=5)
    entries = read_manifest(manifest)
    assert len(entries) == 6
    assert speakers_of(entries) == ["spk01", "spk02"]
    assert [e.split for e in entries[:3]] == ["train", "dev", "test"]
    assert load_inventory(tmp_path / "a" / "inventory.txt") == synthetic_inventory()
    for entry in entries:
        utterance = parse_alignment(entry.alignment)
        waveform = read_wav(entry.wav)
        assert utterance.phones[0] == utterance.phones[-1] == SILENCE
        assert len(waveform) == pytest.approx(utterance.total_duration * 16000, abs=1)
    again = generate_corpus(tmp_path / "b", n_speakers=2, n_utterances=3, seed=5)
    first = read_manifest(again)[0]
    assert first.wav.read_bytes() == entries[0].wav.read_bytes()
