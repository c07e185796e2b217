import json
import subprocess
import sys

import numpy as np
import pytest

from polgate import cli, tomo
from polgate.optics import Phase


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture
def ideal_config(tmp_path):
    path = tmp_path / "ideal.yaml"
    path.write_text("pbs:\n  v_ratio: [100, 0]\n  h_ratio: [0, 100]\n  delta_phi: 0.0\n")
    return path


def test_sweep_phase_ideal_noiseless(tmp_path, ideal_config, capsys):
    out = tmp_path / "out"
    assert run("sweep-phase", "--config", ideal_config, "--noiseless", "--out", out) == 0
    summary = json.loads((out / "summary_phase.json").read_text())
    assert all(p["raw"]["fidelity"] >= 0.9999 for p in summary["points"])
    assert abs(summary["aggregate"]["fitted_delta_phi"]) <= 1e-6
    assert {"fig2_choi.csv", "fig3_phase.csv", "fig4_fidelity.csv", "summary_phase.json"} <= set(read_bytes(out))
    assert "phase sweep" in capsys.readouterr().out


def test_report_echoes_config(tmp_path):
    out = tmp_path / "o"
    assert run("sweep-phase", "--seed", 5, "--out", out, "--delta-phi", -0.2) == 0
    summary = json.loads((out / "summary_phase.json").read_text())
    assert summary["config"]["seed"] == 5
    assert summary["config"]["compensation_delta_phi"] == -0.2
    assert summary["aggregate"]["delta_phi_used"] == -0.2


def test_fig2_layout(tmp_path):
    out = tmp_path / "o"
    run("sweep-phase", "--noiseless", "--out", out)
    lines = (out / "fig2_choi.csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["phi", "variant", "re_00", "im_00"]
    assert len(lines) == 1 + 16
    assert all(len(row.split(",")) == 34 for row in lines)


def test_deterministic_reports(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("sweep-phase", "--seed", 11, "--out", d) == 0
    assert read_bytes(a) == read_bytes(b)


def test_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run("sweep-phase", "--seed", 1, "--out", a)
    run("sweep-phase", "--seed", 2, "--out", b)
    assert (a / "fig2_choi.csv").read_bytes() != (b / "fig2_choi.csv").read_bytes()


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("POLGATE_OUT_DIR", str(tmp_path / "env"))
    assert run("hom-scan") == 0
    assert (tmp_path / "env" / "hom_scan.csv").exists()


def test_hom_scan(tmp_path):
    assert run("hom-scan", "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary_hom.json").read_text())
    assert abs(summary["model_visibility"] - 0.995) < 1e-12
    rows = (tmp_path / "hom_scan.csv").read_text().splitlines()
    assert rows[0] == "delay_s,rate_per_s" and len(rows) == 82


def test_simulate_then_reconstruct_bit_exact(tmp_path, capsys):
    data_dir, rec_dir, sweep_dir = tmp_path / "d", tmp_path / "r", tmp_path / "s"
    assert run("simulate", "--sweep", "phase", "--seed", 3, "--out", data_dir) == 0
    assert len(list(data_dir.glob("dataset_phase_*.csv"))) == 8
    assert run("sweep-phase", "--seed", 3, "--out", sweep_dir) == 0
    summary = json.loads((sweep_dir / "summary_phase.json").read_text())
    capsys.readouterr()
    for i in (0, 5):
        assert run("reconstruct", data_dir / f"dataset_phase_{i:02d}.csv", "--out", rec_dir) == 0
        report = json.loads((rec_dir / f"reconstruct_dataset_phase_{i:02d}.json").read_text())
        assert report["fidelity"] == summary["points"][i]["raw"]["fidelity"]
        assert report["mle"]["log_likelihood"] == summary["points"][i]["mle"]["log_likelihood"]
    assert '"fidelity"' in capsys.readouterr().out


def test_reconstruct_with_explicit_target(tmp_path):
    run("simulate", "--sweep", "filter", "--out", tmp_path)
    path = tmp_path / "dataset_filter_04.csv"
    assert run("reconstruct", path, "--target", "phase:0", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "reconstruct_dataset_filter_04.json").read_text())
    assert report["target"].startswith("phase")
    assert report["fidelity"] > 0.9


def test_reconstruct_empty_file(tmp_path, capsys):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert run("reconstruct", path, "--target", "phase:0") == 2
    assert "empty" in capsys.readouterr().err


def test_reconstruct_missing_record(tmp_path, capsys):
    k = np.eye(2) / 2
    text = tomo.dumps_dataset(tomo.simulate_counts(k, Phase(0), seed=1))
    lines = [ln for ln in text.splitlines() if not ln.startswith("R,L,")]
    path = tmp_path / "short.csv"
    path.write_text("\n".join(lines) + "\n")
    assert run("reconstruct", path) == 2
    assert "(R, L)" in capsys.readouterr().err


def test_reconstruct_malformed_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("input_label,projector_label,counts,exposure_s\nH,Q,1,50\n")
    assert run("reconstruct", path) == 2
    assert "line 2" in capsys.readouterr().err


def test_reconstruct_all_zero(tmp_path, capsys):
    data = tomo.simulate_counts(np.eye(2) / 2, Phase(0), rate_calibration=0.0, seed=0)
    path = tmp_path / "zero.csv"
    tomo.write_dataset(data, path)
    assert run("reconstruct", path) == 2
    assert "zero" in capsys.readouterr().err


def test_reconstruct_missing_file(tmp_path):
    assert run("reconstruct", tmp_path / "nope.csv", "--target", "phase:0") == 2


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("pbs:\n  v_ratio: [1]\n")
    assert run("sweep-phase", "--config", bad) == 1
    assert "config error" in capsys.readouterr().err
    assert run("sweep-phase", "--config", tmp_path / "missing.yaml") == 1


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        run("sweep-sideways")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run("sweep-phase", "--seed", "x")
    assert exc.value.code == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "polgate", "hom-scan", "--out", str(tmp_path)], capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "summary_hom.json").exists()
