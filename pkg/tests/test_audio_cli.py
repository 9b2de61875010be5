import json
import logging

import numpy as np
import pytest
from scipy.io import wavfile

from modalnode.audio import RenderOptions, quantise, stft_magnitudes, write_series_csv, write_wav
from modalnode.cli import main


def test_wav_header_in_independent_reader(tmp_path):
    fs = 88200
    w = np.sin(2 * np.pi * 440 * np.arange(4410) / fs)
    write_wav(tmp_path / "a.wav", w, fs)
    rate, data = wavfile.read(tmp_path / "a.wav")
    assert rate == fs and data.dtype == np.int16 and data.ndim == 1 and data.size == 4410


def test_24_bit_wav(tmp_path):
    w = np.sin(np.linspace(0, 20, 1000))
    write_wav(tmp_path / "b.wav", w, 48000, RenderOptions(bit_depth=24))
    rate, data = wavfile.read(tmp_path / "b.wav")
    assert rate == 48000 and data.size == 1000
    # scipy returns 24-bit PCM left-aligned in int32
    ints = quantise(w, RenderOptions(bit_depth=24))
    assert np.array_equal(data >> 8, ints)


def test_peak_normalisation_within_one_lsb(tmp_path):
    w = np.sin(2 * np.pi * 100 * np.arange(8000) / 8000.0 + 0.1)
    write_wav(tmp_path / "c.wav", w, 8000)
    _, data = wavfile.read(tmp_path / "c.wav")
    target = 32767 * 10 ** (-1 / 20)
    assert abs(np.abs(data).max() - target) <= 1


def test_silent_input_writes_silence(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        write_wav(tmp_path / "s.wav", np.zeros(100), 44100)
    assert "silence" in caplog.text
    _, data = wavfile.read(tmp_path / "s.wav")
    assert data.size == 100 and np.all(data == 0)


def test_render_options_validated():
    with pytest.raises(ValueError):
        RenderOptions(peak_dbfs=0.0)
    with pytest.raises(ValueError):
        RenderOptions(bit_depth=8)
    with pytest.raises(ValueError):
        quantise([1.0, np.nan])


def test_stft_frame_count_and_zero():
    mag = stft_magnitudes(np.zeros(1024), 256, 128)
    assert mag.shape == (7, 129) and np.all(mag == 0)
    with pytest.raises(ValueError):
        stft_magnitudes(np.zeros(100), 256, 128)


def test_stft_tone_concentration():
    window, fs, k0 = 256, 8000.0, 20
    n = np.arange(4096)
    w = np.sin(2 * np.pi * k0 * fs / window * n / fs)
    energy = stft_magnitudes(w, window, 64) ** 2
    near = energy[:, k0 - 1 : k0 + 2].sum()
    assert near / energy.sum() > 0.9


def test_series_csv(tmp_path):
    write_series_csv(tmp_path / "w.csv", 100.0, {"w": [0.1, 0.2]})
    rows = (tmp_path / "w.csv").read_text().splitlines()
    assert rows[0] == "step,time,w" and rows[2] == "1,0.01,0.2"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_end_to_end(tmp_path, capsys):
    d = tmp_path / "data"
    code, out, _ = run(capsys, "gen-dataset", "--profile", "desk-string", "--n-traj", 3, "--duration", 0.02,
                       "--modes", 3, "--seed", 7, "--out-dir", d)
    assert code == 0 and json.loads(out)["trajectories"] == 3
    assert (d / "manifest.json").exists() and (d / "traj_0002.bin").exists()
    assert json.loads((d / "config.json").read_text())["ranges"]["seed"] == 7

    m = tmp_path / "model"
    code, out, _ = run(capsys, "train", "--dataset", d, "--out-dir", m, "--epochs", 2, "--hidden", 1, "--width", 8)
    assert code == 0 and (m / "model.bin").exists() and (m / "config.json").exists()
    assert len((m / "train_log.jsonl").read_text().splitlines()) == 3

    code, out, _ = run(capsys, "eval", "--model", m / "model.bin", "--dataset", d, "--horizons", "10ms,full",
                       "--out", tmp_path / "rep.json", "--per-mode-csv", tmp_path / "pm.csv")
    assert code == 0 and set(json.loads(out)) == {"10ms", "full"}
    assert (tmp_path / "rep.json").exists() and (tmp_path / "pm.csv").exists()

    code, out, _ = run(capsys, "eval", "--model", "tensor", "--dataset", d, "--horizons", "full")
    assert code == 0 and json.loads(out)["full"]["model_rel_mse_q"] < 1e-10

    code, out, _ = run(capsys, "render", "--bundle", d / "traj_0001.bin", "--wav", tmp_path / "o.wav",
                       "--csv", tmp_path / "o.csv", "--stft", tmp_path / "o_stft.csv", "--window", 256, "--hop", 128)
    assert code == 0
    rate, data = wavfile.read(tmp_path / "o.wav")
    assert rate == 88200 and data.size == int(0.02 * 88200)

    for target in (d, m / "model.bin", d / "traj_0000.bin"):
        code, out, _ = run(capsys, "inspect", target)
        assert code == 0 and json.loads(out)


def test_cli_simulate_and_tensor(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"modes": 4, "duration": 0.01}))
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--x-e", 0.4, "--out", tmp_path / "s.bin",
                       "--wav", tmp_path / "s.wav")
    assert code == 0 and json.loads(out)["modes"] == 4
    echoed = json.loads((tmp_path / "s.config.json").read_text())
    assert echoed["x_e"] == 0.4 and echoed["modes"] == 4
    code, out, _ = run(capsys, "tensor", "--modes", 3, "--out", tmp_path / "A.bin")
    assert code == 0 and json.loads(out)["counts"]["ordered"] > 0
    code, out, _ = run(capsys, "inspect", tmp_path / "A.bin")
    assert json.loads(out)["M"] == 3


def test_cli_errors(tmp_path, capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code != 0 and "usage" in err and json.loads(err.strip().splitlines()[-1])["error"]
    code, _, err = run(capsys, "render", "--bundle", tmp_path / "missing.bin", "--wav", tmp_path / "x.wav")
    assert code == 1 and json.loads(err)["error"] == "FileNotFoundError"
    code, _, err = run(capsys, "gen-dataset", "--profile", "paper-train", "--out-dir", tmp_path / "x",
                       "--n-traj", 1, "--duration", 0.001, "--ranges", tmp_path / "nope.json")
    assert code == 1


def test_cli_regeneration_is_bitwise(tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, "gen-dataset", "--profile", "oscillator-cubic-desk", "--n-traj", 2, "--duration", 0.01,
            "--out-dir", tmp_path / name)
        run(capsys, "render", "--bundle", tmp_path / name / "traj_0001.bin", "--wav", tmp_path / name / "o.wav")
    for f in ("traj_0000.bin", "traj_0001.bin", "manifest.json", "o.wav"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
