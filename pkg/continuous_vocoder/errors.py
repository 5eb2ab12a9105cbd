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
"""Exceptions raised across the toolkit"""


class ContinuousVocoderError(Exception):
    """Base class of every error raised by this package."""


class ConfigError(ContinuousVocoderError):
    """The project configuration is missing, malformed or out of bounds."""


class WavError(ContinuousVocoderError):
    """A WAV file could not be read or written."""


class MissingFileError(WavError):
    """The requested audio file does not exist."""


class UnsupportedFormatError(WavError):
    """The file is not an uncompressed PCM / IEEE-float RIFF WAV."""


class TruncatedFileError(WavError):
    """The header or the data chunk is shorter than declared."""


class StreamFormatError(ContinuousVocoderError):
    """A parameter stream, prototype, stats or model file is malformed."""


class AnalysisError(ContinuousVocoderError):
    """A signal does not satisfy the preconditions of an analysis stage."""


class InsufficientVoicingError(AnalysisError):
    """Too few glottal cycles were found to build a residual prototype."""


class AlignmentError(ContinuousVocoderError):
    """A phone alignment file is malformed.

    Args:
        message: what is wrong
        line_number: 1-based line of the offending entry, if known
    """

    def __init__(self, message: str, line_number: int = None) -> None:
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class UnknownPhoneError(ContinuousVocoderError):
    """A phone symbol is not part of the phone inventory."""

    def __init__(self, symbol: str) -> None:
        self.symbol = symbol
        super().__init__(f"unknown phone symbol '{symbol}'")


class SchemaMismatchError(ContinuousVocoderError):
    """Feature or parameter layouts of a model and its data disagree."""


class TrainingDivergedError(ContinuousVocoderError):
    """The training loss became non-finite."""


class MetricError(ContinuousVocoderError):
    """An objective metric is undefined for the given tracks."""


class ManifestError(ContinuousVocoderError):
    """A corpus or evaluation manifest is malformed."""


class InsufficientDataError(ContinuousVocoderError):
    """A corpus is too small for the requested training run."""
