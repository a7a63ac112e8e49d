"""Command-line surface: output schema, exit codes, error-code coverage."""
from __future__ import annotations

import json

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from panelinspect.cli import main
from panelinspect.errors import ErrorCode
from panelinspect.synthgen import PanelSpec, gen_background


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def clean_png(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "clean.png"
    image = gen_background(PanelSpec(T=128, C=8, noise_sigma=0.0, seed=3))
    Image.fromarray(image.pixels).save(path)
    return str(path)


@pytest.fixture(scope="module")
def noise_png(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "noise.png"
    rng = np.random.default_rng(0)
    Image.fromarray(rng.integers(0, 255, (768, 1024), np.uint8).astype(np.uint8)).save(path)
    return str(path)


def test_every_error_code_documented_in_help(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for code in ErrorCode:
        assert code.value in result.output, f"{code.value} missing from --help"


def test_estimate_period_json(runner, clean_png):
    result = runner.invoke(main, ["estimate-period", clean_png, "--json"])
    assert result.exit_code == 0
    payload = json.loads(result.output)
    assert payload["T"] == 128 and payload["C"] == 8
    assert payload["schema"] == "panelinspect/v1"


def test_operational_error_exits_1_with_code(runner, noise_png):
    result = runner.invoke(main, ["estimate-period", noise_png])
    assert result.exit_code == 1
    assert "periodicity/NOT_PERIODIC" in result.output


def test_usage_error_exits_2(runner):
    result = runner.invoke(main, ["estimate-period", "/does/not/exist.png"])
    assert result.exit_code == 2


def test_unknown_config_key_rejected(runner, clean_png, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("theta_det: 0.5\nmystery_knob: 1\n")
    result = runner.invoke(main, ["localize", clean_png, "--config", str(cfg)])
    assert result.exit_code == 2
    assert "mystery_knob" in result.output


def test_config_value_used(runner, clean_png, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("binarization: fixed\nfixed_threshold: 200\n")
    result = runner.invoke(main, ["localize", clean_png, "--config", str(cfg), "--json"])
    assert result.exit_code == 0
    assert json.loads(result.output)["regions"] == []


def test_reconstruct_round_trip(runner, clean_png, tmp_path):
    out = tmp_path / "ref.png"
    result = runner.invoke(main, ["reconstruct", clean_png, "--out", str(out), "--json"])
    assert result.exit_code == 0
    ref = np.asarray(Image.open(out))
    original = np.asarray(Image.open(clean_png).convert("RGB")).astype(np.float64)
    gray = np.round(
        0.299 * original[..., 0] + 0.587 * original[..., 1] + 0.114 * original[..., 2]
    ).astype(np.uint8)
    assert np.array_equal(ref, gray[:, : ref.shape[1]])


def test_gen_writes_manifest(runner, tmp_path):
    result = runner.invoke(main, ["gen", str(tmp_path / "c"), "--n", "10", "--json"])
    assert result.exit_code == 0
    assert (tmp_path / "c" / "manifest.jsonl").exists()
    payload = json.loads(result.output)
    assert payload["n_images"] == 10
