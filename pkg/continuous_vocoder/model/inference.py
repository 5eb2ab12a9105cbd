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
"""Parameter generation from trained networks"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import uniform_filter1d

from continuous_vocoder.analysis.models import F0Track, MgcTrack, MvfTrack
from continuous_vocoder.config import ProjectConfig
from continuous_vocoder.errors import SchemaMismatchError
from continuous_vocoder.features.alignment import (
    AlignedUtterance,
    PhoneInventory,
    utterance_from_phones,
)
from continuous_vocoder.features.linguistic import (
    encode_duration_features,
    encode_linguistic_features,
    linguistic_schema,
    utterance_grid,
)
from continuous_vocoder.model.network import Network
from continuous_vocoder.model.training import predict_durations, predict_raw
from continuous_vocoder.streams import ParamTrack

log = logging.getLogger(__name__)


def acoustic_columns(order: int) -> Tuple[str, ...]:
    """Target layout of the acoustic network: lf0, mvf, then order + 1 MGCs."""
    return ("lf0", "mvf") + tuple(f"mgc{index}" for index in range(order + 1))


def acoustic_targets(params: ParamTrack) -> np.ndarray:
    """Rows of [log F0, MVF, MGC] per frame."""
    return np.column_stack([params.f0.log_values(), params.mvf.values, params.mgc.frames])


def _smooth(values: np.ndarray) -> np.ndarray:
    return uniform_filter1d(values, size=3, mode="nearest")


def predict_parameters(
    net: Network,
    inventory: PhoneInventory,
    config: ProjectConfig = None,
    utterance: Optional[AlignedUtterance] = None,
    phones: Optional[Sequence[str]] = None,
    duration_net: Optional[Network] = None,
) -> ParamTrack:
    """
    Generate a ParamTrack for an alignment or for a phone sequence.

    Phone sequences need `duration_net`; an alignment's own durations are
    used as given. The lf0 and MVF streams are smoothed over three frames,
    F0 is exponentiated and clamped to its bounds and the MVF is clamped
    to [floor, Nyquist].
    """
    config = config or ProjectConfig()
    context = config.network.context
    hop = config.hop
    hop_seconds = hop / config.signal.sample_rate
    if utterance is None:
        if phones is None or duration_net is None:
            raise ValueError("a phone sequence needs a duration model")
        draft = utterance_from_phones(phones, [1] * len(phones), hop_seconds)
        frames = predict_durations(duration_net, encode_duration_features(draft, inventory, context))
        utterance = utterance_from_phones(phones, frames, hop_seconds)
    expected = linguistic_schema(inventory, context)
    if tuple(expected) != net.input_schema:
        raise SchemaMismatchError(
            f"model expects {len(net.input_schema)} input columns, the inventory "
            f"and context give {len(expected)}"
        )
    order = config.spectral.order
    if net.output_schema != acoustic_columns(order):
        raise SchemaMismatchError(
            f"model outputs {len(net.output_schema)} streams, "
            f"order {order} needs {order + 3}"
        )
    grid = utterance_grid(
        utterance, hop, config.signal.sample_rate,
        int(round(config.signal.window_ms * 1e-3 * config.signal.sample_rate)),
    )
    features = encode_linguistic_features(utterance, inventory, grid, context)
    outputs = predict_raw(net, features.values)
    excitation = config.excitation
    f0 = np.clip(np.exp(_smooth(outputs[:, 0])), excitation.f0_floor, excitation.f0_ceil)
    mvf = np.clip(_smooth(outputs[:, 1]), excitation.mvf_floor, config.nyquist)
    fs = config.signal.sample_rate
    spectral = config.spectral
    log.debug("predicted %d frames for %d phones", grid.n_frames, len(utterance))
    return ParamTrack(
        F0Track(f0, hop, fs),
        MvfTrack(mvf, hop, fs),
        MgcTrack(outputs[:, 2:], order, spectral.alpha, spectral.gamma, hop, fs),
    )
