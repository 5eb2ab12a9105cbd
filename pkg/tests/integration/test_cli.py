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
"""Test the cvoc command line from corpus generation to evaluation"""

import pytest
from click.testing import CliRunner

from continuous_vocoder.cli import cli
from continuous_vocoder.model.modelio import load_network
from continuous_vocoder.signal.wavio import read_wav
from tests.fixtures.utils import TEST_DATA_DIR

TINY = str(TEST_DATA_DIR / "tiny.ini")
SPEAKER_OVERRIDES = [
    "--set", "corpus.avm_speakers=spk01,spk02",
    "--set", "corpus.adapt_speakers=spk03",
]


def run(*args):
    """Invoke cvoc with the small test configuration."""
    return CliRunner().invoke(cli, ["--config", TINY, *SPEAKER_OVERRIDES, *map(str, args)])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A synthetic corpus, its streams and trained models"""

    root = tmp_path_factory.mktemp("cvoc")
    corpus = root / "corpus"
    streams = root / "streams"
    models = root / "models"
    steps = [
        ("make-corpus", corpus, "--speakers", 3, "--utterances", 4, "--corpus-seed", 1),
        ("analyze", corpus / "manifest.csv", "--out", streams),
        (
            "train-avm", corpus / "manifest.csv", "--streams", streams,
            "--inventory", corpus / "inventory.txt", "--out", models / "avm.cvdn",
        ),
        (
            "train-duration", corpus / "manifest.csv",
            "--inventory", corpus / "inventory.txt", "--out", models / "duration.cvdn",
        ),
        (
            "adapt", models / "avm.cvdn", corpus / "manifest.csv", "--streams", streams,
            "--inventory", corpus / "inventory.txt", "--out", models / "adapted",
        ),
    ]
    for step in steps:
        result = run(*step)
        assert result.exit_code == 0, (step[0], result.output)
    return root


def _tts(root, wav_out, *extra):
    return run(
        "tts", root / "models" / "adapted" / "spk03.cvdn", wav_out,
        "--prototype", root / "streams" / "spk03" / "spk03.cvrp",
        "--inventory", root / "corpus" / "inventory.txt",
        *extra,
    )


def test_training_outputs(trained):
    """Test the models and loss logs written by the training commands"""

    models = trained / "models"
    avm = load_network(models / "avm.cvdn")
    assert avm.spec.dims[1:-1] == [32, 32]
    assert avm.provenance.epochs_trained == 3
    assert load_network(models / "duration.cvdn").provenance.kind == "duration"
    assert load_network(models / "adapted" / "spk03.cvdn").provenance.epochs_trained == 5
    log_lines = (models / "avm.log.csv").read_text(encoding="utf-8").splitlines()
    assert log_lines[0] == "epoch,train_loss,val_loss"
    assert len(log_lines) == 4
    assert (models / "adapted" / "spk03.log.csv").is_file()


def test_tts_from_phones(trained):
    """Test synthesis from a phone string with predicted durations"""

    first, second = trained / "tts_a.wav", trained / "tts_b.wav"
    for path in (first, second):
        result = _tts(trained, path, "--duration-model", trained / "models" / "duration.cvdn", "--phones", "sil a sil")
        assert result.exit_code == 0, result.output
    waveform = read_wav(first)
    assert len(waveform) > 0 and len(waveform) % 80 == 0
    assert first.read_bytes() == second.read_bytes()


def test_tts_from_alignment(trained):
    """Test synthesis with the durations of an existing alignment"""

    alignment = trained / "corpus" / "lab" / "spk03" / "spk03_004.lab"
    out = trained / "oracle.wav"
    result = _tts(trained, out, "--alignment", alignment, "--use-oracle-durations")
    assert result.exit_code == 0, result.output
    reference = read_wav(trained / "corpus" / "wav" / "spk03" / "spk03_004.wav")
    assert abs(len(read_wav(out)) - len(reference)) <= 80


def test_tts_argument_errors(trained):
    """Test that unusable tts arguments fail without writing output"""

    out = trained / "never.wav"
    assert _tts(trained, out, "--phones", "sil a sil").exit_code == 1
    unknown = _tts(trained, out, "--duration-model", trained / "models" / "duration.cvdn", "--phones", "sil zz sil")
    assert unknown.exit_code == 1
    assert "zz" in unknown.output
    assert not out.exists()


def test_synth_evaluate_and_spectrogram(trained):
    """Test resynthesis from stored streams, its evaluation and rendering"""

    base = trained / "streams" / "spk01" / "spk01_003"
    synthesized = trained / "synth" / "spk01_003.wav"
    result = run("synth", base, trained / "streams" / "spk01" / "spk01.cvrp", synthesized)
    assert result.exit_code == 0, result.output

    manifest = trained / "eval.csv"
    reference = trained / "corpus" / "wav" / "spk01" / "spk01_003.wav"
    manifest.write_text(f"ref,syn,speaker,split\n{reference},{synthesized},spk01,dev\n", encoding="utf-8")
    result = run("evaluate", manifest, "--out", trained / "eval")
    assert result.exit_code == 0, result.output
    table = (trained / "eval" / "report.txt").read_text(encoding="utf-8")
    assert table.startswith("MCD errors on the dev/test sets.")
    assert "| spk01 |" in table

    png = trained / "spec.png"
    result = run("spectrogram", synthesized, png, "--overlay-mvf", base.with_suffix(".mvf"))
    assert result.exit_code == 0, result.output
    assert png.read_bytes().startswith(b"\x89PNG")


def test_evaluate_partial(trained):
    """Test that a missing synthesized file makes the report partial"""

    reference = trained / "corpus" / "wav" / "spk01" / "spk01_001.wav"
    manifest = trained / "eval_partial.csv"
    manifest.write_text(
        f"ref,syn,speaker,split\n{reference},{reference},spk01,dev\n{reference},{trained / 'nope.wav'},spk01,test\n",
        encoding="utf-8",
    )
    assert run("evaluate", manifest, "--out", trained / "eval_partial").exit_code == 2


def test_copysyn_dump_params(trained):
    """Test copy synthesis with stream output"""

    source = trained / "corpus" / "wav" / "spk02" / "spk02_001.wav"
    out = trained / "copy" / "spk02_001.wav"
    result = run("copysyn", source, out, "--dump-params")
    assert result.exit_code == 0, result.output
    for suffix in (".lf0", ".mvf", ".mgc", ".meta"):
        assert out.with_suffix(suffix).is_file()
    assert abs(len(read_wav(out)) - len(read_wav(source))) <= 80


def test_missing_input_fails_cleanly(tmp_path):
    """Test that a missing input exits with 1 and writes nothing"""

    out = tmp_path / "out.wav"
    result = run("copysyn", tmp_path / "absent.wav", out)
    assert result.exit_code == 1
    assert "absent.wav" in result.output
    assert not out.exists()


def test_bad_configuration(tmp_path):
    """Test that invalid overrides exit with 1"""

    result = CliRunner().invoke(cli, ["--set", "training.lr=-1", "copysyn", "a.wav", str(tmp_path / "b.wav")])
    assert result.exit_code == 1
    result = CliRunner().invoke(cli, ["--set", "synthesis.crossover_taps=64", "copysyn", "a.wav", "b.wav"])
    assert result.exit_code == 1


def test_analyze_partial(trained, tmp_path):
    """Test that analysis with an unreadable entry exits with 2"""

    manifest = tmp_path / "manifest.csv"
    wav = trained / "corpus" / "wav" / "spk01" / "spk01_001.wav"
    manifest.write_text(
        f"utt_id,speaker,wav,alignment,split\nspk01_001,spk01,{wav},,train\nspk01_002,spk01,{tmp_path / 'gone.wav'},,train\n",
        encoding="utf-8",
    )
    assert run("analyze", manifest, "--out", tmp_path / "streams").exit_code == 2
