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
"""Project configuration: pydantic models loaded from an INI file"""

import configparser
import io
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, Field, ValidationError, validator

from continuous_vocoder.errors import ConfigError

log = logging.getLogger(__name__)


class _Section(BaseModel):
    """Base of every INI section; unknown keys are rejected."""

    class Config:
        """Forbid keys the section does not declare."""

        extra = "forbid"
        validate_assignment = True


class SignalConfig(_Section):
    """Working rate and the frame clock shared by every stream."""

    sample_rate: int = Field(16000, gt=0)
    hop_ms: float = Field(5.0, gt=0)
    window_ms: float = Field(25.0, ge=5.0)


class ExcitationConfig(_Section):
    """Continuous F0, MVF, GCI and residual prototype settings."""

    f0_floor: float = Field(60.0, ge=50.0, le=500.0)
    f0_ceil: float = Field(400.0, ge=50.0, le=500.0)
    yin_threshold: float = Field(0.1, gt=0.0, lt=1.0)
    periodicity_gate: float = Field(0.45, ge=0.0, le=1.0)
    mvf_floor: float = Field(800.0, gt=0.0)
    mvf_fft_len: int = Field(1024, ge=256)
    mvf_prominence_threshold: float = Field(0.15, ge=0.0, le=1.0)
    mvf_prominence_range_db: float = Field(40.0, gt=0.0)
    mvf_stop_run: int = Field(3, ge=1)
    mvf_median: int = Field(5, ge=1)
    lpc_order: int = Field(24, ge=1)
    preemphasis: float = Field(0.97, ge=0.0, lt=1.0)
    prototype_length: int = Field(512, ge=16)
    min_cycles: int = Field(10, ge=1)

    @validator("f0_ceil")
    def _ceil_above_floor(cls, value, values):  # pylint: disable=no-self-argument
        floor = values.get("f0_floor")
        if floor is not None and value <= floor:
            raise ValueError(f"f0_ceil ({value}) must exceed f0_floor ({floor})")
        return value


class SpectralConfig(_Section):
    """Mel-generalized cepstral analysis settings."""

    order: int = Field(24, ge=1)
    alpha: float = Field(0.42, ge=0.0, lt=1.0)
    gamma: float = Field(-1.0 / 3.0, ge=-1.0, le=0.0)
    fft_len: int = Field(1024, ge=256)
    max_iter: int = Field(30, ge=1)
    tolerance: float = Field(1e-6, gt=0.0)
    power_floor: float = Field(1e-10, gt=0.0)


class SynthesisConfig(_Section):
    """Excitation generation and envelope filtering settings."""

    fft_len: int = Field(1024, ge=64)
    ola_window: Literal["hann"] = "hann"
    noise_seed: int = 0
    unvoiced_envelope: Literal["none", "triangular", "amplitude-follow"] = (
        "amplitude-follow"
    )
    crossover_attenuation_db: float = Field(48.0, gt=0.0)
    crossover_taps: int = Field(65, ge=3)
    excitation_norm: Literal["period", "frame"] = "period"
    noise_gain: float = Field(1.0, ge=0.0)

    @validator("crossover_taps")
    def _odd_taps(cls, value):  # pylint: disable=no-self-argument
        if value % 2 == 0:
            raise ValueError("crossover_taps must be odd for a complementary pair")
        return value


class NetworkConfig(_Section):
    """Topologies of the acoustic and the duration networks."""

    hidden_layers: int = Field(6, ge=1)
    hidden_width: int = Field(1024, ge=1)
    activation: Literal["tanh", "linear"] = "tanh"
    duration_hidden_layers: int = Field(4, ge=1)
    duration_hidden_width: int = Field(512, ge=1)
    context: int = Field(2, ge=0)


class TrainConfig(_Section):
    """Plain mini-batch SGD on mean squared error."""

    batch_size: int = Field(265, ge=1)
    lr: float = Field(0.02, ge=0.0)
    lr_final: float = Field(0.002, ge=0.0)
    epochs: int = Field(25, ge=1)
    seed: int = 1234
    shuffle: bool = True


class AdaptConfig(_Section):
    """Fine-tuning of an average voice model on a target speaker."""

    lr_scale: float = Field(0.1, gt=0.0, le=1.0)
    epochs: int = Field(10, ge=1)
    layers_to_update: str = "all"

    @validator("layers_to_update")
    def _layer_selection(cls, value):  # pylint: disable=no-self-argument
        if value != "all" and not (
            value.startswith("top-") and value[4:].isdigit() and int(value[4:]) > 0
        ):
            raise ValueError("layers_to_update must be 'all' or 'top-k'")
        return value


class CorpusConfig(_Section):
    """Where the corpus lives and how unsplit utterances are divided."""

    root: Optional[str] = None
    manifest: Optional[str] = None
    inventory: Optional[str] = None
    train_fraction: float = Field(0.9, ge=0.0, le=1.0)
    dev_fraction: float = Field(0.05, ge=0.0, le=1.0)
    test_fraction: float = Field(0.05, ge=0.0, le=1.0)
    avm_speakers: List[str] = []
    adapt_speakers: List[str] = []

    @validator("avm_speakers", "adapt_speakers", pre=True)
    def _split_list(cls, value):  # pylint: disable=no-self-argument
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value


class PathsConfig(_Section):
    """Output locations."""

    model_dir: str = "models"
    output_dir: str = "out"


class EvaluationConfig(_Section):
    """Objective metric options."""

    mcd_scaling: Literal["as-printed", "standard-db"] = "as-printed"
    skip_c0: bool = True
    mcd_order: Optional[int] = Field(None, ge=1)
    exclude_unvoiced_reference: bool = True


class SpectrogramConfig(_Section):
    """Spectrogram rendering options."""

    fft_len: int = Field(1024, ge=64)
    hop_ms: float = Field(5.0, gt=0.0)
    dynamic_range_db: float = Field(70.0, gt=0.0)
    zoom: int = Field(1, ge=1)
    colormap: str = "gray_r"


class RunConfig(_Section):
    """Execution options."""

    jobs: int = Field(1, ge=1)


class ProjectConfig(BaseModel):
    """One configuration governing analysis, training and synthesis."""

    signal: SignalConfig = Field(default_factory=SignalConfig)
    excitation: ExcitationConfig = Field(default_factory=ExcitationConfig)
    spectral: SpectralConfig = Field(default_factory=SpectralConfig)
    synthesis: SynthesisConfig = Field(default_factory=SynthesisConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    adaptation: AdaptConfig = Field(default_factory=AdaptConfig)
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    spectrogram: SpectrogramConfig = Field(default_factory=SpectrogramConfig)
    run: RunConfig = Field(default_factory=RunConfig)

    class Config:
        """Forbid unknown sections."""

        extra = "forbid"

    @property
    def hop(self) -> int:
        """Frame shift in samples at the working rate."""
        return int(round(self.signal.hop_ms * 1e-3 * self.signal.sample_rate))

    @property
    def nyquist(self) -> float:
        """Half the working rate in Hz."""
        return self.signal.sample_rate / 2.0

    def check_consistency(self) -> None:
        """Cross-section invariants that no single section can check."""
        if self.synthesis.fft_len < 2 * self.hop:
            raise ConfigError(
                f"synthesis.fft_len ({self.synthesis.fft_len}) must be at least "
                f"twice the hop ({self.hop} samples)"
            )
        if self.excitation.mvf_floor >= self.nyquist:
            raise ConfigError("excitation.mvf_floor must lie below the Nyquist rate")
        fractions = (
            self.corpus.train_fraction
            + self.corpus.dev_fraction
            + self.corpus.test_fraction
        )
        if abs(fractions - 1.0) > 1e-6:
            raise ConfigError(f"corpus split fractions sum to {fractions}, not 1")


def _coerce(value: str) -> Optional[str]:
    stripped = value.strip()
    if stripped == "" or stripped.lower() == "none":
        return None
    return stripped


def _parse_overrides(overrides: Sequence[str]) -> Dict[str, Dict[str, str]]:
    parsed: Dict[str, Dict[str, str]] = {}
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not section or not name:
            raise ConfigError(f"override '{item}' is not of the form section.key=value")
        parsed.setdefault(section, {})[name] = value
    return parsed


def load_config(
    path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()
) -> ProjectConfig:
    """
    Load a ProjectConfig from an INI file and apply `section.key=value` overrides.

    Args:
        path: INI file; None yields the defaults
        overrides: later entries win over earlier ones and over the file
    """
    raw: Dict[str, Dict[str, Optional[str]]] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # type: ignore[assignment]
        try:
            with open(path, encoding="utf-8") as config_file:
                parser.read_file(config_file)
        except configparser.Error as error:
            raise ConfigError(f"cannot parse {path}: {error}") from error
        for section in parser.sections():
            raw[section] = {key: _coerce(val) for key, val in parser[section].items()}
    for section, values in _parse_overrides(overrides).items():
        raw.setdefault(section, {}).update(
            {key: _coerce(val) for key, val in values.items()}
        )
    cleaned = {
        section: {key: val for key, val in values.items() if val is not None}
        for section, values in raw.items()
    }
    try:
        config = ProjectConfig(**cleaned)
    except ValidationError as error:
        raise ConfigError(f"invalid configuration: {error}") from error
    except TypeError as error:
        raise ConfigError(f"invalid configuration: {error}") from error
    config.check_consistency()
    log.debug("configuration loaded from %s", path or "defaults")
    return config


def dump_config(config: ProjectConfig) -> str:
    """Render the configuration as INI text that load_config reads back."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment]
    for section, values in config.dict().items():
        parser[section] = {}
        for key, value in values.items():
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(value)
            parser[section][key] = repr(value) if isinstance(value, float) else str(value)
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()
