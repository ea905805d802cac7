import json

import numpy as np
import pytest

from hsrfuse.cli import main
from hsrfuse.fileio import read_htf, write_htf

SIMULATE_CFG = """
[synthesis]
dims = 16,16,8

[model]
rank = 2
term_rank = 2

[blur]
kernel_width = 5
sigma = 1.0
ratio = 2

[spectral]
bands = 0-1,2-3,4-5,6-7

[noise]
snr_db = {snr}

[run]
seed = {seed}
out = {out}
"""

FUSE_CFG = """
[inputs]
hsi = {d}/HSI.htf
msi = {d}/MSI.htf
p1 = {d}/P1.csv
p2 = {d}/P2.csv
pm = {d}/PM.csv
reference = {d}/SRI.htf

[model]
rank = 2

[blur]
kernel_width = 5
sigma = 1.0
ratio = 2

[solver]
ridge_weight = 1e-6
max_iters = {iters}
rel_tol = 0

[run]
seed = 5
out = {out}
"""


def _simulate(tmp_path, out="sim", seed=1, snr="inf"):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(SIMULATE_CFG.format(out=tmp_path / out, seed=seed, snr=snr))
    assert main(["simulate", "--config", str(cfg)]) == 0
    return tmp_path / out


def _fuse_config(tmp_path, sim_dir, out="fused", iters=400):
    cfg = tmp_path / f"fuse_{out}.cfg"
    cfg.write_text(FUSE_CFG.format(d=sim_dir, out=tmp_path / out, iters=iters))
    return cfg


def test_simulate_writes_expected_artifacts(tmp_path):
    out = _simulate(tmp_path)
    for name in ("SRI.htf", "HSI.htf", "MSI.htf", "P1.csv", "P2.csv", "PM.csv", "manifest.json"):
        assert (out / name).is_file()
    hsi = read_htf(out / "HSI.htf")
    msi = read_htf(out / "MSI.htf")
    assert hsi.shape == (8, 8, 8)
    assert msi.shape == (16, 16, 4)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["op_dims"]["p1"] == [8, 16]
    assert manifest["recoverability"]["satisfied"] is True


def test_simulate_same_seed_byte_identical(tmp_path):
    out_a = _simulate(tmp_path, out="a", seed=9, snr="30")
    out_b = _simulate(tmp_path, out="b", seed=9, snr="30")
    for name in ("SRI.htf", "HSI.htf", "MSI.htf", "P1.csv", "P2.csv", "PM.csv", "manifest.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_simulate_seed_override_changes_noise(tmp_path):
    out_a = _simulate(tmp_path, out="a", seed=1, snr="20")
    cfg = tmp_path / "sim2.cfg"
    cfg.write_text(SIMULATE_CFG.format(out=tmp_path / "c", seed=1, snr="20"))
    assert main(["simulate", "--config", str(cfg), "--seed", "2"]) == 0
    assert (out_a / "HSI.htf").read_bytes() != (tmp_path / "c" / "HSI.htf").read_bytes()


def test_simulate_realized_snr_recorded(tmp_path):
    out = _simulate(tmp_path, snr="25")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["snr_db_realized"]["hsi"] == pytest.approx(25.0, abs=1e-9)
    assert manifest["snr_db_realized"]["msi"] == pytest.approx(25.0, abs=1e-9)


def test_simulate_warns_when_unrecoverable(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    text = SIMULATE_CFG.format(out=tmp_path / "w", seed=1, snr="inf")
    text = text.replace("term_rank = 2", "term_rank = 8").replace("rank = 2", "rank = 8")
    cfg.write_text(text)
    assert main(["simulate", "--config", str(cfg)]) == 0  # warning is non-fatal
    assert "recovery conditions not satisfied" in capsys.readouterr().err


def test_fuse_end_to_end_with_metrics(tmp_path):
    sim = _simulate(tmp_path)
    cfg = _fuse_config(tmp_path, sim)
    assert main(["fuse", "--config", str(cfg)]) == 0
    fused = tmp_path / "fused"
    report = json.loads((fused / "report.json").read_text())
    assert report["mode"] == "fuse"
    metrics = report["metrics"]
    for key in ("rsnr_db", "ssim", "cc", "uiqi", "rmse", "ergas", "sam_rad"):
        assert key in metrics
    assert metrics["rsnr_db"] > 30.0
    trace = (fused / "trace.csv").read_text().strip().splitlines()
    assert trace[0] == "iteration,objective,elapsed"
    assert len(trace) == report["iterations"] + 2
    sri = read_htf(fused / "SRI.htf")
    assert sri.shape == (16, 16, 8)


def test_fuse_same_seed_deterministic_results(tmp_path):
    sim = _simulate(tmp_path)
    cfg_a = _fuse_config(tmp_path, sim, out="fa", iters=60)
    cfg_b = _fuse_config(tmp_path, sim, out="fb", iters=60)
    assert main(["fuse", "--config", str(cfg_a)]) == 0
    assert main(["fuse", "--config", str(cfg_b)]) == 0
    a, b = tmp_path / "fa", tmp_path / "fb"
    assert (a / "SRI.htf").read_bytes() == (b / "SRI.htf").read_bytes()
    report_a = json.loads((a / "report.json").read_text())
    report_b = json.loads((b / "report.json").read_text())
    report_a.pop("timing"), report_b.pop("timing")
    assert report_a == report_b  # includes the config fingerprint and metrics
    # trace rows match on iteration and objective; elapsed is wall time
    rows_a = [line.split(",")[:2] for line in (a / "trace.csv").read_text().splitlines()]
    rows_b = [line.split(",")[:2] for line in (b / "trace.csv").read_text().splitlines()]
    assert rows_a == rows_b


def test_blind_fuse_ignores_spatial_ops_with_warning(tmp_path, capsys):
    sim = _simulate(tmp_path)
    cfg = _fuse_config(tmp_path, sim, out="blind", iters=300)
    assert main(["blind-fuse", "--config", str(cfg)]) == 0
    assert "ignores the provided p1/p2" in capsys.readouterr().err
    report = json.loads((tmp_path / "blind" / "report.json").read_text())
    assert report["mode"] == "blind-fuse"
    assert np.isfinite(report["metrics"]["rsnr_db"])
    sri = read_htf(tmp_path / "blind" / "SRI.htf")
    assert sri.shape == (16, 16, 8)


def test_fuse_flag_overrides(tmp_path):
    sim = _simulate(tmp_path)
    cfg = _fuse_config(tmp_path, sim, out="short", iters=500)
    assert main(["fuse", "--config", str(cfg), "--max-iters", "3", "--no-accel"]) == 0
    report = json.loads((tmp_path / "short" / "report.json").read_text())
    assert report["iterations"] <= 3


def test_evaluate_identical_files(tmp_path, capsys):
    rng = np.random.default_rng(0)
    t = rng.uniform(0.1, 1.0, size=(6, 6, 4))
    write_htf(tmp_path / "ref.htf", t)
    write_htf(tmp_path / "est.htf", t)
    assert main(["evaluate", str(tmp_path / "ref.htf"), str(tmp_path / "est.htf")]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["rmse"] == 0.0
    assert payload["ssim"] == 1.0
    assert payload["rsnr_db"] == float("inf")


def test_evaluate_per_band_flag(tmp_path, capsys):
    rng = np.random.default_rng(1)
    ref = rng.uniform(0.1, 1.0, size=(6, 6, 4))
    est = ref + 0.01 * rng.standard_normal(ref.shape)
    write_htf(tmp_path / "ref.htf", ref)
    write_htf(tmp_path / "est.htf", est)
    out = tmp_path / "metrics_out"
    code = main([
        "evaluate", str(tmp_path / "ref.htf"), str(tmp_path / "est.htf"),
        "--ratio", "2", "--per-band", "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["per_band"]["rmse"]) == 4
    assert json.loads((out / "metrics.json").read_text()) == payload


def test_check_command_pavia(tmp_path, capsys):
    code = main([
        "check", "--msi-dims", "256,256", "--hsi-dims", "64,64",
        "--msi-bands", "4", "--rank", "4", "--term-rank", "32",
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["satisfied"] is True


def test_check_command_blind_single_band(capsys):
    code = main([
        "check", "--msi-dims", "64,64", "--hsi-dims", "16,16",
        "--msi-bands", "1", "--rank", "3", "--term-rank", "2", "--blind",
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["satisfied"] is False
    assert any("msi_bands >= 2" in c for c in payload["failed_conditions"])


def test_exit_code_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[solver]\nbogus = 1\n")
    assert main(["fuse", "--config", str(cfg)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_exit_code_missing_input(tmp_path, capsys):
    cfg = tmp_path / "fuse.cfg"
    cfg.write_text("[model]\nrank = 2\n")
    assert main(["fuse", "--config", str(cfg)]) == 2


def test_exit_code_dimension_error(tmp_path, capsys):
    sim = _simulate(tmp_path)
    # swap P1 for a full-row-rank matrix with the wrong column count
    bad = tmp_path / "bad"
    bad.mkdir()
    for name in ("HSI.htf", "MSI.htf", "P2.csv", "PM.csv", "SRI.htf"):
        (bad / name).write_bytes((sim / name).read_bytes())
    from hsrfuse.fileio import write_matrix_csv

    write_matrix_csv(bad / "P1.csv", np.eye(8, 12))
    cfg = _fuse_config(tmp_path, bad, out="bad_out", iters=5)
    assert main(["fuse", "--config", str(cfg)]) == 3


def test_exit_code_rank_deficient_operator(tmp_path, capsys):
    sim = _simulate(tmp_path)
    bad = tmp_path / "rankdef"
    bad.mkdir()
    for name in ("HSI.htf", "MSI.htf", "P2.csv", "PM.csv", "SRI.htf"):
        (bad / name).write_bytes((sim / name).read_bytes())
    from hsrfuse.fileio import write_matrix_csv

    write_matrix_csv(bad / "P1.csv", np.vstack([np.eye(4, 16)] * 2))
    cfg = _fuse_config(tmp_path, bad, out="rd_out", iters=5)
    assert main(["fuse", "--config", str(cfg)]) == 2


def test_evaluate_missing_file_is_config_error(tmp_path):
    assert main(["evaluate", str(tmp_path / "a.htf"), str(tmp_path / "b.htf")]) == 2


DEFAULT_PROTOCOL_CFG = """
[synthesis]
dims = 64,64,16

[model]
rank = 2
term_rank = 2

[spectral]
bands = 0-3,4-7,8-11,12-15

[run]
seed = 1
out = {out}
"""


def test_simulate_default_protocol_dims(tmp_path):
    # defaults: 9x9 kernel, sigma 2, ratio 4 -> a 64x64x16 image yields 16x16x16
    cfg = tmp_path / "proto.cfg"
    cfg.write_text(DEFAULT_PROTOCOL_CFG.format(out=tmp_path / "proto"))
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert read_htf(tmp_path / "proto" / "HSI.htf").shape == (16, 16, 16)
    assert read_htf(tmp_path / "proto" / "MSI.htf").shape == (64, 64, 4)


def test_numerical_failure_flushes_trace(tmp_path, monkeypatch, capsys):
    import hsrfuse.cli as cli_mod
    from hsrfuse.errors import NumericalError

    sim = _simulate(tmp_path)
    cfg = _fuse_config(tmp_path, sim, out="diverged", iters=5)

    def exploding_fuse(*args, **kwargs):
        raise NumericalError(
            "objective became non-finite",
            trace=np.array([3.0, 2.0, 1.5]),
            elapsed=np.array([0.0, 0.1, 0.2]),
        )

    monkeypatch.setattr(cli_mod, "fuse", exploding_fuse)
    assert main(["fuse", "--config", str(cfg)]) == 4
    assert "numerical failure" in capsys.readouterr().err
    trace = (tmp_path / "diverged" / "trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,objective,elapsed"
    assert len(trace) == 4  # header + the three flushed entries
    assert not (tmp_path / "diverged" / "SRI.htf").exists()
