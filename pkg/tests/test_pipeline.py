import json
import math

import numpy as np
import pytest

from polgate import metrics, pipeline, tomo
from polgate.pipeline import ConfigError, ExperimentConfig


@pytest.fixture(scope="module")
def ideal_phase_report():
    return pipeline.run_phase_sweep(ExperimentConfig.ideal(noiseless=True))


def test_default_grids():
    cfg = ExperimentConfig()
    assert np.abs(np.array(cfg.phase_grid) - np.arange(8) * math.pi / 4).max() < 1e-15
    assert np.abs(np.array(cfg.theta_grid) - np.arange(9) * math.pi / 16).max() < 1e-15
    assert cfg.v_ratio == (97.7, 2.3) and cfg.h_ratio == (0.5, 99.5)
    assert cfg.delta_phi == -0.265 and cfg.exposure_s == 50.0


def test_point_seeds_distinct():
    seeds = {pipeline.point_seed(0, s, i) for s in ("phase", "filter") for i in range(9)}
    assert len(seeds) == 18
    assert pipeline.point_seed(3, "phase", 2) == pipeline.point_seed(3, "phase", 2)


class TestIdealClosure:
    def test_phase(self, ideal_phase_report):
        for p in ideal_phase_report.points:
            assert p.raw["fidelity"] >= 0.9999
            assert abs(metrics.wrap_phase(p.raw["phi_eff"] - p.setting.angle)) <= 1e-6
        assert abs(ideal_phase_report.fit.offset) <= 1e-6

    def test_filter(self):
        report = pipeline.run_filter_sweep(ExperimentConfig.ideal(noiseless=True), delta_phi=0.0)
        for p in report.points:
            assert p.compensated["fidelity"] >= 0.9999

    def test_offset_recovered_without_splitting_errors(self):
        cfg = ExperimentConfig.ideal(noiseless=True)
        cfg.delta_phi = -0.265
        report = pipeline.run_phase_sweep(cfg)
        # limited by the sublinear MLE approach to a rank-one optimum, not by the fit
        assert abs(report.fit.offset + 0.265) <= 2e-5
        for p in report.points:
            assert p.compensated["fidelity"] >= 0.9999


def test_aggregate_recomputable(ideal_phase_report):
    agg = ideal_phase_report.aggregate()
    comp = [p.compensated["fidelity"] for p in ideal_phase_report.points]
    assert abs(agg["mean_compensated_fidelity"] - np.mean(comp)) < 1e-12
    for p in ideal_phase_report.points:
        for row in (p.raw, p.compensated):
            assert 0 <= row["fidelity"] <= 1 + 1e-12


def test_filter_skips_compensation_at_endpoints():
    cfg = ExperimentConfig(noiseless=True, theta_grid=[0.0, math.pi / 4, math.pi / 2])
    report = pipeline.run_filter_sweep(cfg, delta_phi=-0.265)
    applied = [p.compensation_applied for p in report.points]
    assert applied == [False, True, False]
    for p in report.points:
        if not p.compensation_applied:
            assert p.compensated["fidelity"] == p.raw["fidelity"]


def test_configured_offset_overrides_fit():
    cfg = ExperimentConfig(noiseless=True, phase_grid=[0.0, 1.0], compensation_delta_phi=0.1)
    assert pipeline.run_phase_sweep(cfg).delta_phi_used == 0.1


class TestConfig:
    def test_defaults_from_empty(self):
        assert pipeline.config_from_mapping({}).to_dict() == ExperimentConfig().to_dict()

    def test_overrides(self):
        cfg = pipeline.config_from_mapping(
            {"pbs": {"v_ratio": [100, 0], "delta_phi": 0.1}, "seed": 4, "mle": {"tol": 1e-8}, "hom": {"overlap": 0.9}}
        )
        assert cfg.v_ratio == (100.0, 0.0) and cfg.delta_phi == 0.1
        assert cfg.seed == 4 and cfg.mle.tol == 1e-8 and cfg.hom.overlap == 0.9

    @pytest.mark.parametrize(
        "raw",
        [
            {"bogus": 1},
            {"pbs": {"ratio": 1}},
            {"pbs": {"v_ratio": [1, 2, 3]}},
            {"pbs": {"v_ratio": [-1, 2]}},
            {"exposure_s": 0},
            {"phase_grid": []},
            {"mle": {"max_iter": 0}},
            {"hom": {"overlap": 2}},
            {"seed": "abc"},
            [1, 2],
        ],
    )
    def test_invalid(self, raw):
        with pytest.raises(ConfigError):
            pipeline.config_from_mapping(raw)

    def test_load_yaml(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("seed: 7\npbs:\n  delta_phi: 0.0\n")
        cfg = pipeline.load_config(path)
        assert cfg.seed == 7 and cfg.delta_phi == 0.0

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            pipeline.load_config(tmp_path / "missing.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("seed: [1,\n")
        with pytest.raises(ConfigError):
            pipeline.load_config(bad)


class TestHom:
    def visibility(self, **hom):
        cfg = pipeline.config_from_mapping({"hom": hom})
        return pipeline.run_hom_scan(cfg)[1]

    def test_perfect_overlap(self):
        s = self.visibility(overlap=1.0)
        assert abs(s["scan_visibility"] - 1) < 1e-9

    def test_no_overlap_flat(self):
        cfg = pipeline.config_from_mapping({"hom": {"overlap": 0.0}})
        rows, s = pipeline.run_hom_scan(cfg)
        rates = [r for _, r in rows]
        assert max(rates) - min(rates) < 1e-9 * max(rates)
        assert s["scan_visibility"] < 1e-9

    def test_imperfect_analysis_reaches_089(self):
        # symmetric leak eps gives optics visibility 1 - 4 eps (1 - eps)
        eps = (1 - math.sqrt(0.89)) / 2
        s = self.visibility(
            overlap=1.0, analysis_v_ratio=[100 * (1 - eps), 100 * eps], analysis_h_ratio=[100 * eps, 100 * (1 - eps)]
        )
        assert abs(s["model_visibility"] - 0.89) < 1e-9
        # the +-4 coherence-time window leaves a small residual dip at the edges
        assert abs(s["scan_visibility"] - 0.89) < 1e-4


def test_reconstruct_dataset_matches_pipeline(tmp_path):
    cfg = ExperimentConfig()
    data, res = pipeline.reconstruct_point(cfg, "phase", 3)
    path = tmp_path / "d.csv"
    tomo.write_dataset(data, path)
    back = tomo.read_dataset(path)
    res2, report = pipeline.reconstruct_dataset(back, data.program, cfg.mle)
    assert np.array_equal(res.chi, res2.chi)
    assert report["fidelity"] == pipeline.analyze(res.chi, data.program)["fidelity"]
    json.dumps(report)
