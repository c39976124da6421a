import json
from pathlib import Path
from typing import List

import pytest

import src.autodiff.functional as functional
from src.cli.commands import cmd_sweep, cmd_verify, dataset_filename
from src.cli.main import EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, main, parse_args, resolve_run_config
from src.cli.verify import VerifyOptions
from src.config import OUTPUT_DIR_ENV, ConfigError
from src.dataset.storage import save_dataset
from src.dataset.windows import generate_cell
from src.link.channel import ChannelConfig
from src.harness.results import read_csv, read_manifest

TINY = ["--symbols", "40", "--eval-symbols", "40", "--no-progress", "--log-level", "WARNING"]
QUICK = ["--max-iterations", "3", "--batch-size", "16"]
SMALL_VERIFY = VerifyOptions(
    oracle_draws=5, binary_cases=20, gradient_batches=1, gradient_batch_size=8, throughput_windows=64
)


def _run(args: List[str]) -> int:
    return main(args)


def test_gen_writes_one_file_per_power(tmp_path: Path) -> None:
    out = tmp_path / "gen"
    assert _run(["gen", "--distance", "d10km", "--output-dir", str(out), *TINY]) == EXIT_OK
    files = sorted(out.glob("*.rwds"))
    assert len(files) == 8
    assert (out / dataset_filename("d10km", -20.0)).exists()
    first = read_manifest(out)
    assert first.command == "gen"
    assert len(first.artifacts) == 8

    assert _run(["gen", "--distance", "d10km", "--output-dir", str(out), *TINY]) == EXIT_OK
    assert read_manifest(out).artifacts == first.artifacts


def test_unknown_distance_is_a_usage_error(tmp_path: Path) -> None:
    assert _run(["gen", "--distance", "d99km", "--output-dir", str(tmp_path)]) == EXIT_USAGE


def test_train_without_dataset_is_a_usage_error(tmp_path: Path) -> None:
    assert _run(["train", "--output-dir", str(tmp_path), *QUICK]) == EXIT_USAGE
    assert _run(["train", "--dataset", str(tmp_path / "missing"), "--output-dir", str(tmp_path)]) == EXIT_USAGE


def test_train_on_generated_files(tmp_path: Path) -> None:
    data = tmp_path / "data"
    assert _run(["gen", "--distance", "d15km", "--output-dir", str(data), *TINY]) == EXIT_OK

    out = tmp_path / "threshold"
    assert _run(["train", "--model", "threshold", "--dataset", str(data), "--output-dir", str(out)]) == EXIT_OK
    assert [row["model"] for row in read_csv(out / "train_trace.csv")] == ["threshold"]

    out = tmp_path / "fcnn"
    code = _run(["train", "--model", "fcnn", "--dataset", str(data), "--output-dir", str(out), *QUICK])
    assert code == EXIT_OK
    assert (out / "model_fcnn.npz").exists()
    summary = read_manifest(out).summary
    assert summary["cost"]["fcnn"]["parameters"] == 11762


def test_mixed_decide_index_files_are_a_usage_error(tmp_path: Path) -> None:
    channel = ChannelConfig.preset("d10km")
    first = save_dataset(generate_cell(channel, -18.0, 50, 1, 1), tmp_path / "first.rwds")
    second = save_dataset(generate_cell(channel, -18.0, 50, 2, 2), tmp_path / "second.rwds")
    code = _run(
        ["train", "--model", "threshold", "--dataset", f"{first},{second}", "--output-dir", str(tmp_path / "out")]
    )
    assert code == EXIT_USAGE


def test_divergent_training_exit_code(tmp_path: Path) -> None:
    data = tmp_path / "data"
    assert _run(["gen", "--distance", "d10km", "--output-dir", str(data), *TINY]) == EXIT_OK
    code = _run(
        ["train", "--model", "fcnn", "--dataset", str(data), "--output-dir", str(tmp_path), "--lr", "1e300", *QUICK]
    )
    assert code == EXIT_DIVERGED


def test_power_sweep_and_replay_are_byte_identical(tmp_path: Path) -> None:
    first = tmp_path / "first"
    args = ["sweep", "power", "--distance", "d10km", "--output-dir", str(first), *TINY, *QUICK]
    assert _run(args) == EXIT_OK

    rows = read_csv(first / "ber_curve.csv")
    assert len(rows) == 4 * 8
    assert {row["model"] for row in rows} == {"cnn", "bcnn", "fcnn", "threshold"}
    assert len(read_csv(first / "sensitivity.csv")) == 4
    manifest = json.loads((first / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["run_config"]["workbench"]["dataset"]["symbols_per_cell"] == 40

    second = tmp_path / "second"
    replay = ["sweep", "--from-manifest", str(first / "manifest.json"), "--output-dir", str(second), "--no-progress"]
    assert _run(replay) == EXIT_OK
    for name in ("ber_curve.csv", "sensitivity.csv", "train_trace.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_unknown_model_preset_is_a_usage_error(tmp_path: Path) -> None:
    code = _run(["sweep", "power", "--models", "cnn,resnet", "--output-dir", str(tmp_path), *TINY])
    assert code == EXIT_USAGE


def test_unknown_sweep_kind_raises_config_error(tmp_path: Path) -> None:
    run = resolve_run_config(parse_args(["sweep", "power", *TINY]))
    with pytest.raises(ConfigError) as excinfo:
        cmd_sweep(run.model_copy(update={"sweep_kind": "latency"}), tmp_path)
    assert excinfo.value.section == "sweep"


def test_datasize_sweep_runs_on_the_configured_distance(tmp_path: Path) -> None:
    config = tmp_path / "workbench.ini"
    config.write_text(
        "[link]\na1 = 1.0\na3 = 0.0\nsps = 4\npower_grid_dbm = -20, -19, -18, -17, -16\n"
        "calibration_slope_db_per_db = 2.0\ncalibration_offset_db = -24.0\nisi_taps = 1.0\n\n"
        "[link.d20km]\n\n[sweep]\ndatasize_distance = d15km\n",
        encoding="utf-8",
    )
    code = _run(["sweep", "datasize", "--config", str(config), "--output-dir", str(tmp_path / "out"), *TINY])
    assert code == EXIT_USAGE


def test_activation_sweep_writes_one_row_per_function(tmp_path: Path) -> None:
    assert _run(["sweep", "activations", "--output-dir", str(tmp_path), *TINY, *QUICK]) == EXIT_OK
    rows = read_csv(tmp_path / "activation_ber.csv")
    assert [row["activation"] for row in rows] == ["leaky_relu", "relu", "sigmoid", "tanh"]
    assert {row["distance"] for row in rows} == {"d15km"}


def test_output_dir_from_environment(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert _run(["gen", "--distance", "d20km", *TINY]) == EXIT_OK
    assert len(list((tmp_path / "env").glob("*.rwds"))) == 8


def test_verify_passes_on_correct_kernels(tmp_path: Path) -> None:
    run = resolve_run_config(parse_args(["verify"]))
    outcome = cmd_verify(run, tmp_path, options=SMALL_VERIFY)
    assert outcome.exit_code == 0, outcome.summary["failed_checks"]
    assert (tmp_path / "verify_report.txt").exists()


def test_verify_fails_on_corrupted_conv_gradient(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    original = functional._conv1d_backward

    def corrupted(*args, **kwargs):
        grad_input, grad_kernels, grad_bias = original(*args, **kwargs)
        return grad_input, grad_kernels * 1.5, grad_bias

    monkeypatch.setattr(functional, "_conv1d_backward", corrupted)
    run = resolve_run_config(parse_args(["verify"]))
    outcome = cmd_verify(run, tmp_path, options=SMALL_VERIFY)
    assert outcome.exit_code == 1
    assert "layer gradients" in " ".join(outcome.summary["failed_checks"])
    assert outcome.summary["packed/naive throughput ratio"] > 0.0
