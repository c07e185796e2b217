"""End-to-end experiment pipelines: phase sweep, filter sweep, HOM scan.

Each sweep point gets its own seed derived from the configured base seed,
the sweep name and the grid index, so points are independent of evaluation
order and results are merged in grid order.
"""
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from . import metrics, optics, tomo


class ConfigError(ValueError):
    pass


def _default_phase_grid():
    return [k * math.pi / 4 for k in range(8)]


def _default_theta_grid():
    return [n * math.pi / 16 for n in range(9)]


@dataclass
class HomConfig:
    overlap: float = 0.995
    coherence_time_s: float = 0.5e-12
    baseline_rate: float = 1000.0
    # analysis PBS in front of D1/D2, reflected:transmitted intensity ratios
    analysis_v_ratio: tuple = (100.0, 0.0)
    analysis_h_ratio: tuple = (0.0, 100.0)
    delays_s: list = None

    def model(self):
        return optics.HomModel(self.overlap, self.coherence_time_s, self.baseline_rate)

    def analysis_pbs(self):
        return optics.PbsModel.from_ratios(self.analysis_v_ratio, self.analysis_h_ratio, 0.0)

    def delays(self):
        if self.delays_s is not None:
            return [float(d) for d in self.delays_s]
        tc = self.coherence_time_s
        return [float(x) for x in np.linspace(-4 * tc, 4 * tc, 81)]


@dataclass
class ExperimentConfig:
    v_ratio: tuple = (97.7, 2.3)
    h_ratio: tuple = (0.5, 99.5)
    delta_phi: float = -0.265
    exposure_s: float = tomo.DEFAULT_EXPOSURE
    rate_calibration: float = tomo.DEFAULT_RATE
    seed: int = 0
    noiseless: bool = False
    phase_grid: list = field(default_factory=_default_phase_grid)
    theta_grid: list = field(default_factory=_default_theta_grid)
    mle: tomo.MleOptions = field(default_factory=tomo.MleOptions)
    hom: HomConfig = field(default_factory=HomConfig)
    # compensation offset; None means use the offset fitted by the phase sweep
    compensation_delta_phi: float = None

    @property
    def pbs(self):
        return optics.PbsModel.from_ratios(self.v_ratio, self.h_ratio, self.delta_phi)

    @classmethod
    def ideal(cls, **kw):
        return cls(v_ratio=(100.0, 0.0), h_ratio=(0.0, 100.0), delta_phi=0.0, **kw)

    def to_dict(self):
        d = asdict(self)
        d["v_ratio"] = list(self.v_ratio)
        d["h_ratio"] = list(self.h_ratio)
        d["mle"]["dilution"] = list(self.mle.dilution)
        d["hom"]["analysis_v_ratio"] = list(self.hom.analysis_v_ratio)
        d["hom"]["analysis_h_ratio"] = list(self.hom.analysis_h_ratio)
        return d


_TOP_KEYS = {
    "pbs",
    "exposure_s",
    "rate_calibration",
    "seed",
    "noiseless",
    "phase_grid",
    "theta_grid",
    "mle",
    "hom",
    "compensation_delta_phi",
}


def _ratio(value, key):
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{key} must be a pair [reflected, transmitted]")
    a, b = (float(v) for v in value)
    if a < 0 or b < 0 or a + b <= 0:
        raise ConfigError(f"{key} must be non-negative with positive sum")
    return (a, b)


def config_from_mapping(raw):
    """Build an ExperimentConfig from a parsed key/value document; all keys optional."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = ExperimentConfig()
    try:
        pbs = raw.get("pbs") or {}
        bad = set(pbs) - {"v_ratio", "h_ratio", "delta_phi"}
        if bad:
            raise ConfigError(f"unknown pbs keys: {', '.join(sorted(bad))}")
        if "v_ratio" in pbs:
            cfg.v_ratio = _ratio(pbs["v_ratio"], "pbs.v_ratio")
        if "h_ratio" in pbs:
            cfg.h_ratio = _ratio(pbs["h_ratio"], "pbs.h_ratio")
        if "delta_phi" in pbs:
            cfg.delta_phi = float(pbs["delta_phi"])
        for key, conv in (("exposure_s", float), ("rate_calibration", float), ("seed", int), ("noiseless", bool)):
            if key in raw:
                setattr(cfg, key, conv(raw[key]))
        for key in ("phase_grid", "theta_grid"):
            if key in raw:
                setattr(cfg, key, [float(x) for x in raw[key]])
        if raw.get("compensation_delta_phi") is not None:
            cfg.compensation_delta_phi = float(raw["compensation_delta_phi"])
        mle = raw.get("mle") or {}
        bad = set(mle) - {"max_iter", "tol", "dilution", "floor"}
        if bad:
            raise ConfigError(f"unknown mle keys: {', '.join(sorted(bad))}")
        cfg.mle = tomo.MleOptions(
            max_iter=int(mle.get("max_iter", cfg.mle.max_iter)),
            tol=float(mle.get("tol", cfg.mle.tol)),
            dilution=tuple(float(x) for x in mle.get("dilution", cfg.mle.dilution)),
            floor=float(mle.get("floor", cfg.mle.floor)),
        )
        hom = raw.get("hom") or {}
        bad = set(hom) - set(HomConfig.__dataclass_fields__)
        if bad:
            raise ConfigError(f"unknown hom keys: {', '.join(sorted(bad))}")
        h = HomConfig()
        for key in ("overlap", "coherence_time_s", "baseline_rate"):
            if key in hom:
                setattr(h, key, float(hom[key]))
        for key in ("analysis_v_ratio", "analysis_h_ratio"):
            if key in hom:
                setattr(h, key, _ratio(hom[key], f"hom.{key}"))
        if "delays_s" in hom:
            h.delays_s = [float(x) for x in hom["delays_s"]]
        cfg.hom = h
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if not cfg.exposure_s > 0:
        raise ConfigError("exposure_s must be positive")
    if cfg.rate_calibration < 0:
        raise ConfigError("rate_calibration must be non-negative")
    if not cfg.phase_grid or not cfg.theta_grid:
        raise ConfigError("parameter grids must be non-empty")
    if cfg.mle.max_iter < 1 or cfg.mle.tol < 0:
        raise ConfigError("mle.max_iter must be >= 1 and mle.tol >= 0")
    if not cfg.hom.coherence_time_s > 0:
        raise ConfigError("hom.coherence_time_s must be positive")
    if not 0 <= cfg.hom.overlap <= 1:
        raise ConfigError("hom.overlap must lie in [0, 1]")
    try:
        cfg.pbs
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None):
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return config_from_mapping(raw)


_SWEEP_TAGS = {"phase": 1, "filter": 2}


def point_seed(base_seed, sweep, index):
    """Independent 32-bit seed per sweep point."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, _SWEEP_TAGS[sweep], int(index)])
    return int(ss.generate_state(1)[0])


def program_for(sweep, angle):
    return optics.Phase(angle) if sweep == "phase" else optics.Filter(angle)


def simulate_point(cfg, sweep, index):
    angle = (cfg.phase_grid if sweep == "phase" else cfg.theta_grid)[index]
    setting = program_for(sweep, angle)
    k = optics.effective_kraus(setting, cfg.pbs)
    return tomo.simulate_counts(
        k,
        setting,
        exposure=cfg.exposure_s,
        rate_calibration=cfg.rate_calibration,
        seed=point_seed(cfg.seed, sweep, index),
        noiseless=cfg.noiseless,
    )


def ideal_choi(setting):
    if setting.mode == "phase":
        return metrics.ideal_choi_phase(setting.angle)
    return metrics.ideal_choi_filter(setting.angle)


def analyze(chi, setting):
    """Fidelities and phase diagnostics of one reconstructed process."""
    tr = float(np.trace(chi).real)
    row = {
        "fidelity": metrics.process_fidelity(chi, ideal_choi(setting)),
        "phi_eff": metrics.effective_phase(chi),
        "success_probability": tr / 2.0,
    }
    if setting.mode == "phase":
        row["f_avg"] = metrics.average_state_fidelity(chi, setting.angle)
    return row


def _is_complete_filter(theta):
    c, s = math.cos(theta), math.sin(theta)
    return abs(c) < 1e-12 or abs(s) < 1e-12


@dataclass
class SweepPoint:
    setting: optics.ProgramSetting
    seed: int
    mle: tomo.MleResult
    raw: dict
    chi_compensated: np.ndarray = None
    compensated: dict = None
    compensation_applied: bool = True


@dataclass
class SweepReport:
    kind: str
    points: list
    fit: metrics.PhaseFit = None
    delta_phi_used: float = 0.0
    config: ExperimentConfig = None

    def aggregate(self):
        raw = [p.raw["fidelity"] for p in self.points]
        comp = [p.compensated["fidelity"] for p in self.points]
        agg = {
            "mean_raw_fidelity": float(np.mean(raw)),
            "mean_compensated_fidelity": float(np.mean(comp)),
            "compensation_gain": float(np.mean(comp) - np.mean(raw)),
            "compensated_spread": float(np.max(comp) - np.min(comp)),
            "delta_phi_used": self.delta_phi_used,
            "mle_converged_points": int(sum(p.mle.converged for p in self.points)),
        }
        if self.fit is not None:
            agg.update(fitted_slope=self.fit.slope, fitted_delta_phi=self.fit.offset, fit_rms=self.fit.rms)
        if self.kind == "phase":
            favg_raw = [p.raw["f_avg"] for p in self.points]
            favg = [p.compensated["f_avg"] for p in self.points]
            agg.update(
                f_avg_raw_range=[float(np.min(favg_raw)), float(np.max(favg_raw))],
                f_avg_compensated_range=[float(np.min(favg)), float(np.max(favg))],
            )
            # empirical F_avg = a F_chi + b over raw and compensated points
            x = np.array(raw + comp)
            y = np.array(favg_raw + favg)
            if np.ptp(x) > 0:
                a, b = np.polyfit(x, y, 1)
                agg["f_avg_vs_f_chi"] = {"slope": float(a), "intercept": float(b)}
        return agg

    def to_dict(self):
        rows = []
        for p in self.points:
            rows.append(
                {
                    "program": p.setting.label(),
                    "angle": p.setting.angle,
                    "seed": p.seed,
                    "raw": p.raw,
                    "compensated": p.compensated,
                    "compensation_applied": p.compensation_applied,
                    "mle": {
                        "iterations": p.mle.iterations,
                        "converged": p.mle.converged,
                        "log_likelihood": p.mle.log_likelihood,
                        "floor": p.mle.floor,
                    },
                }
            )
        return {
            "kind": self.kind,
            "config": self.config.to_dict() if self.config else None,
            "aggregate": self.aggregate(),
            "points": rows,
        }


def reconstruct_point(cfg, sweep, index):
    data = simulate_point(cfg, sweep, index)
    return data, tomo.mle_reconstruct(data, cfg.mle)


def run_phase_sweep(cfg):
    points = []
    for i, phi in enumerate(cfg.phase_grid):
        data, res = reconstruct_point(cfg, "phase", i)
        points.append(SweepPoint(data.program, data.seed, res, analyze(res.chi, data.program)))
    pairs = [(p.setting.angle, p.raw["phi_eff"]) for p in points if p.raw["phi_eff"] is not None]
    fit = metrics.fit_phase_offset(pairs) if len({a for a, _ in pairs}) >= 2 else None
    if cfg.compensation_delta_phi is not None:
        d = cfg.compensation_delta_phi
    else:
        d = fit.offset if fit is not None else 0.0
    for p in points:
        p.chi_compensated = metrics.compensate_choi(p.mle.chi, d)
        p.compensated = analyze(p.chi_compensated, p.setting)
    return SweepReport("phase", points, fit, float(d), cfg)


def run_filter_sweep(cfg, delta_phi=None):
    """Filter tomography; compensation offset from ``delta_phi``, the config, or a phase sweep."""
    if delta_phi is None:
        delta_phi = cfg.compensation_delta_phi
    if delta_phi is None:
        delta_phi = run_phase_sweep(cfg).delta_phi_used
    points = []
    for i, theta in enumerate(cfg.theta_grid):
        data, res = reconstruct_point(cfg, "filter", i)
        p = SweepPoint(data.program, data.seed, res, analyze(res.chi, data.program))
        if _is_complete_filter(theta):
            # no H-V coherence: the phase offset is irrelevant
            p.chi_compensated = res.chi
            p.compensation_applied = False
        else:
            p.chi_compensated = metrics.compensate_choi(res.chi, delta_phi)
        p.compensated = analyze(p.chi_compensated, p.setting)
        points.append(p)
    return SweepReport("filter", points, None, float(delta_phi), cfg)


def run_hom_scan(cfg, delays=None):
    delays = cfg.hom.delays() if delays is None else list(delays)
    rows = optics.hom_scan(delays, cfg.hom.model(), cfg.hom.analysis_pbs())
    rates = [r for _, r in rows]
    hi = max(rates)
    vis = (hi - min(rates)) / hi if hi > 0 else 0.0
    summary = {
        "kind": "hom",
        "config": cfg.to_dict(),
        "model_visibility": cfg.hom.overlap * optics.hom_optics_visibility(cfg.hom.analysis_pbs()),
        "scan_visibility": vis,
    }
    return rows, summary


def reconstruct_dataset(data, target, opts=None):
    res = tomo.mle_reconstruct(data, opts)
    out = {"target": target.label(), "mle": res.to_dict()}
    out.update(analyze(res.chi, target))
    return res, out


# -- report files ---------------------------------------------------------------


def _num(x):
    if x is None:
        return ""
    return repr(float(x))


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _choi_cells(chi):
    cells = []
    for z in np.asarray(chi).reshape(-1):
        cells += [_num(z.real), _num(z.imag)]
    return cells


def _choi_header():
    h = []
    for r in range(4):
        for c in range(4):
            h += [f"re_{r}{c}", f"im_{r}{c}"]
    return h


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_phase_report(report, outdir):
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for p in report.points:
        rows.append([_num(p.setting.angle), "raw"] + _choi_cells(p.mle.chi))
        rows.append([_num(p.setting.angle), "compensated"] + _choi_cells(p.chi_compensated))
    _write_rows(outdir / "fig2_choi.csv", ["phi", "variant"] + _choi_header(), rows)

    fit = report.fit
    rows = []
    for p in report.points:
        line = fit.slope * p.setting.angle + fit.offset if fit else None
        rows.append([_num(p.setting.angle), _num(p.raw["phi_eff"]), _num(line)])
    _write_rows(outdir / "fig3_phase.csv", ["phi", "phi_eff", "fit_line"], rows)

    rows = []
    for p in report.points:
        rows.append(
            [
                _num(p.setting.angle),
                _num(p.raw["fidelity"]),
                _num(p.compensated["fidelity"]),
                _num(p.raw["f_avg"]),
                _num(p.compensated["f_avg"]),
                _num(p.raw["success_probability"]),
                str(p.mle.iterations),
                str(int(p.mle.converged)),
            ]
        )
    header = ["phi", "f_raw", "f_comp", "f_avg_raw", "f_avg_comp", "success_probability", "mle_iterations", "mle_converged"]
    _write_rows(outdir / "fig4_fidelity.csv", header, rows)
    dump_json(report.to_dict(), outdir / "summary_phase.json")


def write_filter_report(report, outdir):
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for p in report.points:
        rows.append(
            [
                _num(p.setting.angle),
                _num(p.raw["fidelity"]),
                _num(p.compensated["fidelity"]),
                _num(p.raw["phi_eff"]),
                str(int(p.compensation_applied)),
                _num(p.raw["success_probability"]),
                str(p.mle.iterations),
                str(int(p.mle.converged)),
            ]
        )
    header = ["theta", "f_raw", "f_comp", "phi_eff", "compensated", "success_probability", "mle_iterations", "mle_converged"]
    _write_rows(outdir / "fig5_filter.csv", header, rows)
    dump_json(report.to_dict(), outdir / "summary_filter.json")


def write_hom_report(rows, summary, outdir):
    outdir.mkdir(parents=True, exist_ok=True)
    _write_rows(outdir / "hom_scan.csv", ["delay_s", "rate_per_s"], [[_num(d), _num(r)] for d, r in rows])
    dump_json(summary, outdir / "summary_hom.json")


def with_overrides(cfg, seed=None, noiseless=None, delta_phi=None):
    changes = {}
    if seed is not None:
        changes["seed"] = int(seed)
    if noiseless:
        changes["noiseless"] = True
    if delta_phi is not None:
        changes["compensation_delta_phi"] = float(delta_phi)
    return replace(cfg, **changes) if changes else cfg
