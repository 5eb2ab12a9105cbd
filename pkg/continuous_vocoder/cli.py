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
"""The cvoc command line"""

import functools
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional

import click

from continuous_vocoder import __version__
from continuous_vocoder.analysis.models import MvfTrack
from continuous_vocoder.config import ProjectConfig, load_config
from continuous_vocoder.corpus.manifest import CorpusEntry, assign_splits, read_manifest
from continuous_vocoder.corpus.synthetic import generate_corpus
from continuous_vocoder.errors import ConfigError, ContinuousVocoderError
from continuous_vocoder.evaluation.report import evaluate_corpus, read_eval_manifest
from continuous_vocoder.evaluation.spectrogram import render_spectrogram
from continuous_vocoder.features.alignment import PhoneInventory, load_inventory, parse_alignment
from continuous_vocoder.model.inference import predict_parameters
from continuous_vocoder.model.modelio import load_network
from continuous_vocoder.pipeline import (
    EXIT_FAILED,
    EXIT_OK,
    EXIT_PARTIAL,
    StepOutcome,
    adapt_step,
    analyze_corpus,
    train_avm_step,
    train_duration_step,
)
from continuous_vocoder.signal.wavio import read_wav, write_wav
from continuous_vocoder.streams import (
    META_SUFFIX,
    load_param_track,
    load_prototype,
    read_mgc_meta,
    read_stream,
    save_param_track,
    stream_paths,
)
from continuous_vocoder.synthesis.vocoder import copy_synthesis, synthesize

log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

FILE = click.Path(dir_okay=False, path_type=Path)
DIRECTORY = click.Path(file_okay=False, path_type=Path)


def configure_logging(verbose: bool = False) -> None:
    """Send log records of every module to stderr as timestamped lines."""
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def guarded(command: Callable[..., Optional[int]]) -> Callable[..., None]:
    """Turn package errors into a logged message and exit code 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs) -> None:
        try:
            code = command(*args, **kwargs)
        except (ContinuousVocoderError, ValueError) as error:
            log.error("%s", error)
            code = EXIT_FAILED
        click.get_current_context().exit(code or EXIT_OK)

    return wrapper


def _report(outcome: StepOutcome, what: str) -> int:
    for name, message in outcome.failures:
        log.error("%s failed for %s: %s", what, name, message)
    log.info("%s: %d files written, %d failures", what, len(outcome.written), len(outcome.failures))
    return outcome.exit_code


def _manifest_entries(config: ProjectConfig, manifest: Optional[Path]) -> List[CorpusEntry]:
    manifest = manifest or config.corpus.manifest
    if manifest is None:
        raise ConfigError("no manifest given and corpus.manifest is not set")
    entries = read_manifest(manifest, config.corpus.root)
    return assign_splits(entries, config.corpus.train_fraction, config.corpus.dev_fraction)


def _inventory(config: ProjectConfig, path: Optional[Path]) -> PhoneInventory:
    path = path or config.corpus.inventory
    if path is None:
        raise ConfigError("no phone inventory given and corpus.inventory is not set")
    return load_inventory(path)


def _streams_dir(config: ProjectConfig, path: Optional[Path]) -> Path:
    return path or Path(config.paths.output_dir) / "streams"


inventory_option = click.option(
    "--inventory", type=FILE, default=None, help="Phone inventory (default: corpus.inventory)."
)
streams_option = click.option(
    "--streams",
    "streams_dir",
    type=DIRECTORY,
    default=None,
    help="Analysed streams (default: <paths.output_dir>/streams).",
)
manifest_argument = click.argument("manifest", type=FILE, required=False)


@click.group()
@click.option("--config", "config_path", type=FILE, default=None, help="INI configuration file.")
@click.option(
    "--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE", help="Override one configuration key."
)
@click.option("--seed", type=int, default=None, help="Training and noise seed.")
@click.option("--jobs", type=int, default=None, help="Worker processes for corpus commands.")
@click.option("--verbose", "-v", is_flag=True, help="Log debug messages.")
@click.version_option(__version__)
@click.pass_context
def cli(ctx, config_path, overrides, seed, jobs, verbose):
    """Continuous vocoder analysis, synthesis, training and evaluation."""
    configure_logging(verbose)
    overrides = list(overrides)
    if seed is not None:
        overrides += [f"training.seed={seed}", f"synthesis.noise_seed={seed}"]
    if jobs is not None:
        overrides.append(f"run.jobs={jobs}")
    try:
        ctx.obj = load_config(config_path, overrides)
    except ConfigError as error:
        log.error("%s", error)
        ctx.exit(EXIT_FAILED)


@cli.command("make-corpus")
@click.argument("out_dir", type=DIRECTORY)
@click.option("--speakers", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--utterances", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--corpus-seed", type=int, default=0, show_default=True)
@click.pass_obj
@guarded
def make_corpus(config: ProjectConfig, out_dir: Path, speakers: int, utterances: int, corpus_seed: int):
    """Generate a synthetic multi-speaker corpus with alignments."""
    manifest = generate_corpus(
        out_dir, speakers, utterances, corpus_seed, config.signal.sample_rate,
        config.corpus.train_fraction, config.corpus.dev_fraction,
    )
    log.info("manifest written to %s", manifest)


@cli.command()
@manifest_argument
@click.option("--out", "out_dir", type=DIRECTORY, default=None, help="Default: <paths.output_dir>/streams.")
@click.pass_obj
@guarded
def analyze(config: ProjectConfig, manifest: Optional[Path], out_dir: Optional[Path]):
    """Write lf0/mvf/mgc streams per utterance and a prototype per speaker."""
    entries = _manifest_entries(config, manifest)
    outcome = analyze_corpus(entries, config, _streams_dir(config, out_dir), config.run.jobs)
    return _report(outcome, "analysis")


@cli.command()
@click.argument("wav_in", type=FILE)
@click.argument("wav_out", type=FILE)
@click.option("--dump-params", is_flag=True, help="Also write the streams next to WAV_OUT.")
@click.pass_obj
@guarded
def copysyn(config: ProjectConfig, wav_in: Path, wav_out: Path, dump_params: bool):
    """Analyse a recording and resynthesize it from its own parameters."""
    output, params = copy_synthesis(read_wav(wav_in), config, config.synthesis.noise_seed)
    write_wav(wav_out, output)
    if dump_params:
        save_param_track(wav_out.with_suffix(""), params)


@cli.command()
@click.argument("stream_base", type=FILE)
@click.argument("prototype", type=FILE)
@click.argument("wav_out", type=FILE)
@click.pass_obj
@guarded
def synth(config: ProjectConfig, stream_base: Path, prototype: Path, wav_out: Path):
    """Render a waveform from stored streams and a residual prototype."""
    params = load_param_track(stream_base)
    output = synthesize(
        params, load_prototype(prototype), config.synthesis,
        config.excitation.mvf_floor, config.synthesis.noise_seed,
    )
    write_wav(wav_out, output)


@cli.command("train-avm")
@manifest_argument
@streams_option
@inventory_option
@click.option("--out", "model_path", type=FILE, default=None, help="Default: <paths.model_dir>/avm.cvdn.")
@click.pass_obj
@guarded
def train_avm_command(config, manifest, streams_dir, inventory, model_path):
    """Train the average voice acoustic model."""
    outcome = train_avm_step(
        _manifest_entries(config, manifest),
        _streams_dir(config, streams_dir),
        _inventory(config, inventory),
        config,
        model_path or Path(config.paths.model_dir) / "avm.cvdn",
    )
    return _report(outcome, "average voice training")


@cli.command("train-duration")
@manifest_argument
@inventory_option
@click.option("--out", "model_path", type=FILE, default=None, help="Default: <paths.model_dir>/duration.cvdn.")
@click.pass_obj
@guarded
def train_duration_command(config, manifest, inventory, model_path):
    """Train the phone duration model."""
    outcome = train_duration_step(
        _manifest_entries(config, manifest),
        _inventory(config, inventory),
        config,
        model_path or Path(config.paths.model_dir) / "duration.cvdn",
    )
    return _report(outcome, "duration training")


@cli.command("adapt")
@click.argument("base_model", type=FILE)
@manifest_argument
@streams_option
@inventory_option
@click.option("--speaker", "speakers", multiple=True, help="Target speaker (default: corpus.adapt_speakers).")
@click.option("--out", "out_dir", type=DIRECTORY, default=None, help="Default: <paths.model_dir>/adapted.")
@click.pass_obj
@guarded
def adapt_command(config, base_model, manifest, streams_dir, inventory, speakers, out_dir):
    """Adapt an average voice model to each target speaker."""
    outcome, _ = adapt_step(
        load_network(base_model),
        _manifest_entries(config, manifest),
        _streams_dir(config, streams_dir),
        _inventory(config, inventory),
        config,
        out_dir or Path(config.paths.model_dir) / "adapted",
        speakers,
    )
    return _report(outcome, "adaptation")


@cli.command()
@click.argument("acoustic_model", type=FILE)
@click.argument("wav_out", type=FILE)
@click.option("--prototype", type=FILE, required=True, help="Residual prototype of the voice.")
@inventory_option
@click.option("--duration-model", type=FILE, default=None)
@click.option("--phones", default=None, help='Space-separated phones, e.g. "sil a m a sil".')
@click.option("--alignment", type=FILE, default=None, help="Alignment file to synthesize.")
@click.option("--use-oracle-durations", is_flag=True, help="Keep the alignment's own durations.")
@click.pass_obj
@guarded
def tts(config, acoustic_model, wav_out, prototype, inventory, duration_model, phones, alignment, use_oracle_durations):
    """Synthesize speech from a phone string or an alignment."""
    if (phones is None) == (alignment is None):
        raise ConfigError("give exactly one of --phones and --alignment")
    if use_oracle_durations and alignment is None:
        raise ConfigError("--use-oracle-durations needs --alignment")
    if not use_oracle_durations and duration_model is None:
        raise ConfigError("predicting durations needs --duration-model")
    net = load_network(acoustic_model)
    phone_inventory = _inventory(config, inventory)
    if use_oracle_durations:
        params = predict_parameters(net, phone_inventory, config, utterance=parse_alignment(alignment))
    else:
        symbols = phones.split() if phones is not None else parse_alignment(alignment).phones
        for symbol in symbols:
            phone_inventory.index(symbol)
        params = predict_parameters(
            net, phone_inventory, config, phones=symbols, duration_net=load_network(duration_model)
        )
    output = synthesize(
        params, load_prototype(prototype), config.synthesis,
        config.excitation.mvf_floor, config.synthesis.noise_seed,
    )
    write_wav(wav_out, output)
    log.info("synthesized %.2f s to %s", output.duration, wav_out)


@cli.command()
@click.argument("eval_manifest", type=FILE)
@click.option("--out", "out_dir", type=DIRECTORY, default=None, help="Default: <paths.output_dir>/eval.")
@click.pass_obj
@guarded
def evaluate(config: ProjectConfig, eval_manifest: Path, out_dir: Optional[Path]):
    """Score synthesized speech against references and write the report."""
    report = evaluate_corpus(read_eval_manifest(eval_manifest), config, config.run.jobs)
    paths = report.save(out_dir or Path(config.paths.output_dir) / "eval")
    log.info("report (%s) written to %s", report.status, paths["table"])
    return {"complete": EXIT_OK, "partial": EXIT_PARTIAL}.get(report.status, EXIT_FAILED)


def _overlay_track(path: Path, config: ProjectConfig) -> MvfTrack:
    values = read_stream(path)
    meta_path = stream_paths(path)[META_SUFFIX]
    if meta_path.is_file():
        meta = read_mgc_meta(meta_path)
        sample_rate = int(meta["sample_rate"])
        hop = int(round(meta["hop_ms"] * 1e-3 * sample_rate))
        return MvfTrack(values, hop, sample_rate)
    return MvfTrack(values, config.hop, config.signal.sample_rate)


@cli.command()
@click.argument("wav", type=FILE)
@click.argument("png_out", type=FILE)
@click.option("--overlay-mvf", type=FILE, default=None, help="A .mvf stream drawn as a red contour.")
@click.pass_obj
@guarded
def spectrogram(config: ProjectConfig, wav: Path, png_out: Path, overlay_mvf: Optional[Path]):
    """Render a spectrogram PNG, optionally with the MVF contour."""
    overlay = _overlay_track(overlay_mvf, config) if overlay_mvf is not None else None
    width, height = render_spectrogram(read_wav(wav), png_out, config.spectrogram, overlay)
    log.info("wrote %dx%d spectrogram to %s", width, height, png_out)
