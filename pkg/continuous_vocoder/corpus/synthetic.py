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
"""Synthetic multi-speaker corpora for desk-scale experiments"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import butter, freqz, lfilter, sosfilt
from tqdm import tqdm

from continuous_vocoder.corpus.manifest import CorpusEntry, assign_splits, write_manifest
from continuous_vocoder.features.alignment import (
    AlignedUtterance,
    PhoneInventory,
    save_inventory,
    utterance_from_phones,
    write_alignment,
)
from continuous_vocoder.signal.models import Waveform, hop_for_rate
from continuous_vocoder.signal.wavio import write_wav
from continuous_vocoder.synthesis.excitation import excitation_instants

log = logging.getLogger(__name__)

# (frequency, bandwidth) of the first three formants
VOWELS: Dict[str, Tuple[Tuple[float, float], ...]] = {
    "a": ((730, 80), (1090, 90), (2440, 120)),
    "i": ((270, 60), (2290, 100), (3010, 120)),
    "u": ((300, 60), (870, 100), (2240, 120)),
    "e": ((530, 80), (1840, 90), (2480, 120)),
    "o": ((570, 80), (840, 100), (2410, 120)),
}
NASALS: Dict[str, Tuple[Tuple[float, float], ...]] = {
    "m": ((250, 60), (1200, 150), (2300, 200)),
    "n": ((250, 60), (1700, 150), (2600, 200)),
}
# noise pass band in Hz
FRICATIVES: Dict[str, Tuple[float, float]] = {
    "s": (4000.0, 7500.0),
    "sh": (2000.0, 6000.0),
    "f": (1000.0, 7500.0),
}
SILENCE = "sil"
CONSONANTS = tuple(NASALS) + tuple(FRICATIVES)

# frames per phone class, before speaker rate scaling
DURATION_FRAMES = {"sil": (20, 30), "vowel": (16, 32), "nasal": (12, 20), "fricative": (12, 20)}
LEVELS = {"sil": 0.0, "vowel": 1.0, "nasal": 0.5, "fricative": 0.3}


def phone_class(phone: str) -> str:
    """One of sil, vowel, nasal or fricative."""
    if phone in VOWELS:
        return "vowel"
    if phone in NASALS:
        return "nasal"
    if phone in FRICATIVES:
        return "fricative"
    return "sil"


def synthetic_inventory() -> PhoneInventory:
    """Every phone the generator can emit."""
    return PhoneInventory(tuple(sorted((SILENCE,) + tuple(VOWELS) + CONSONANTS)))


@dataclass(frozen=True)
class SpeakerProfile:
    """Voice characteristics of one pseudo-speaker."""

    name: str
    f0_base: float
    formant_scale: float
    tilt: float
    rate: float


def speaker_profiles(count: int, seed: int = 0) -> List[SpeakerProfile]:
    """Distinct, reproducible pseudo-speakers."""
    rng = np.random.default_rng([seed, 7])
    profiles = []
    for index in range(count):
        profiles.append(
            SpeakerProfile(
                name=f"spk{index + 1:02d}",
                f0_base=float(rng.uniform(95.0, 230.0)),
                formant_scale=float(rng.uniform(0.88, 1.15)),
                tilt=float(rng.uniform(0.85, 0.97)),
                rate=float(rng.uniform(0.85, 1.2)),
            )
        )
    return profiles


def formant_filter(formants: Sequence[Tuple[float, float]], scale: float, sample_rate: int) -> Tuple[np.ndarray, np.ndarray]:
    """All-pole cascade of second-order resonators, normalized to unit peak gain."""
    denominator = np.array([1.0])
    for frequency, bandwidth in formants:
        f = min(frequency * scale, 0.45 * sample_rate) / sample_rate
        b = bandwidth / sample_rate
        resonator = [1.0, -2.0 * np.exp(-np.pi * b) * np.cos(2.0 * np.pi * f), np.exp(-2.0 * np.pi * b)]
        denominator = np.convolve(denominator, resonator)
    _, response = freqz([1.0], denominator, worN=512)
    return np.array([1.0 / np.max(np.abs(response))]), denominator


def random_phones(rng: np.random.Generator) -> List[str]:
    """Silence, three to six consonant-vowel syllables, silence."""
    phones = [SILENCE]
    for _ in range(int(rng.integers(3, 7))):
        phones.append(CONSONANTS[int(rng.integers(len(CONSONANTS)))])
        phones.append(tuple(VOWELS)[int(rng.integers(len(VOWELS)))])
    phones.append(SILENCE)
    return phones


def random_durations(phones: Sequence[str], profile: SpeakerProfile, rng: np.random.Generator) -> List[int]:
    """Frames per phone drawn from the class ranges, scaled by speaking rate."""
    frames = []
    for phone in phones:
        low, high = DURATION_FRAMES[phone_class(phone)]
        frames.append(max(4, int(round(rng.integers(low, high + 1) * profile.rate))))
    return frames


def render_utterance(
    utterance: AlignedUtterance,
    profile: SpeakerProfile,
    sample_rate: int,
    rng: np.random.Generator,
) -> Waveform:
    """Source-filter rendering of an alignment in a pseudo-speaker's voice."""
    n_samples = int(round(utterance.total_duration * sample_rate))
    times = np.arange(n_samples) / sample_rate
    progress = times / max(utterance.total_duration, 1e-9)
    f0 = profile.f0_base * (1.1 - 0.2 * progress) * (
        1.0 + 0.03 * np.sin(2.0 * np.pi * 3.0 * times + rng.uniform(0, 2 * np.pi))
    )
    source = np.zeros(n_samples)
    instants = np.rint(excitation_instants(f0, sample_rate)).astype(int)
    source[instants[instants < n_samples]] = -1.0
    source = lfilter([1.0], [1.0, -profile.tilt], source)
    noise = rng.standard_normal(n_samples)

    output = np.zeros(n_samples)
    level = np.zeros(n_samples)
    state = np.zeros(6)
    for entry in utterance.entries:
        start = int(round(entry.start * sample_rate))
        stop = min(int(round(entry.end * sample_rate)), n_samples)
        kind = phone_class(entry.phone)
        level[start:stop] = LEVELS[kind]
        if kind in ("vowel", "nasal"):
            table = VOWELS if kind == "vowel" else NASALS
            gain, denominator = formant_filter(table[entry.phone], profile.formant_scale, sample_rate)
            output[start:stop], state = lfilter(gain, denominator, source[start:stop], zi=state)
        elif kind == "fricative":
            low, high = FRICATIVES[entry.phone]
            high = min(high, 0.45 * sample_rate)
            sos = butter(4, [low, high], btype="bandpass", fs=sample_rate, output="sos")
            output[start:stop] = sosfilt(sos, noise[start:stop]) * 3.0
    envelope = uniform_filter1d(level, size=max(1, hop_for_rate(sample_rate)), mode="nearest")
    output = output * envelope + 1e-4 * noise
    peak = np.max(np.abs(output))
    return Waveform(0.6 * output / peak if peak > 0 else output, sample_rate)


def synthetic_vowel(
    duration: float,
    f0_start: float,
    f0_end: float = None,
    vowel: str = "a",
    sample_rate: int = 16000,
    tilt: float = 0.9,
) -> Waveform:
    """A single steady vowel with a linear F0 glide."""
    f0_end = f0_start if f0_end is None else f0_end
    n_samples = int(round(duration * sample_rate))
    f0 = np.linspace(f0_start, f0_end, n_samples)
    source = np.zeros(n_samples)
    instants = np.rint(excitation_instants(f0, sample_rate)).astype(int)
    source[instants[instants < n_samples]] = -1.0
    source = lfilter([1.0], [1.0, -tilt], source)
    gain, denominator = formant_filter(VOWELS[vowel], 1.0, sample_rate)
    output = lfilter(gain, denominator, source)
    return Waveform(0.6 * output / np.max(np.abs(output)), sample_rate)


def generate_corpus(
    out_dir: Union[str, Path],
    n_speakers: int = 3,
    n_utterances: int = 50,
    seed: int = 0,
    sample_rate: int = 16000,
    train_fraction: float = 0.9,
    dev_fraction: float = 0.05,
) -> Path:
    """
    Write a synthetic corpus: wav/<speaker>/<utt>.wav, lab/<speaker>/<utt>.lab,
    inventory.txt and manifest.csv. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    hop_seconds = hop_for_rate(sample_rate) / sample_rate
    entries = []
    for profile in speaker_profiles(n_speakers, seed):
        rng = np.random.default_rng([seed, n_speakers, int(profile.name[3:])])
        for index in tqdm(range(n_utterances), desc=profile.name, disable=None):
            utt_id = f"{profile.name}_{index + 1:03d}"
            phones = random_phones(rng)
            utterance = utterance_from_phones(
                phones, random_durations(phones, profile, rng), hop_seconds, utt_id, profile.name
            )
            wav_path = out_dir / "wav" / profile.name / f"{utt_id}.wav"
            lab_path = out_dir / "lab" / profile.name / f"{utt_id}.lab"
            write_wav(wav_path, render_utterance(utterance, profile, sample_rate, rng))
            write_alignment(lab_path, utterance)
            entries.append(CorpusEntry(utt_id, profile.name, wav_path, lab_path))
    save_inventory(out_dir / "inventory.txt", synthetic_inventory())
    manifest = out_dir / "manifest.csv"
    write_manifest(manifest, assign_splits(entries, train_fraction, dev_fraction))
    log.info("wrote %d utterances of %d speakers to %s", len(entries), n_speakers, out_dir)
    return manifest
