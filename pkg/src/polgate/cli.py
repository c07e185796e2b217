"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure (MLE failed to converge at every sweep point).
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline, tomo
from ._accel import backend_name
from .optics import ProgramSetting

log = logging.getLogger("polgate")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ENV = "POLGATE_OUT_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_dir(args):
    return Path(args.out or os.environ.get(OUT_ENV) or "out")


def _config(args):
    cfg = pipeline.load_config(args.config)
    return pipeline.with_overrides(
        cfg,
        seed=args.seed,
        noiseless=getattr(args, "noiseless", False),
        delta_phi=getattr(args, "delta_phi", None),
    )


def _all_failed(report):
    return not any(p.mle.converged for p in report.points)


def cmd_sweep_phase(args):
    cfg = _config(args)
    report = pipeline.run_phase_sweep(cfg)
    out = _out_dir(args)
    pipeline.write_phase_report(report, out)
    agg = report.aggregate()
    print(
        f"phase sweep: mean fidelity raw {agg['mean_raw_fidelity']:.5f}, "
        f"compensated {agg['mean_compensated_fidelity']:.5f}, "
        f"fitted delta_phi {agg.get('fitted_delta_phi', float('nan')):+.5f} rad -> {out}"
    )
    return EXIT_NUMERIC if _all_failed(report) else EXIT_OK


def cmd_sweep_filter(args):
    cfg = _config(args)
    report = pipeline.run_filter_sweep(cfg)
    out = _out_dir(args)
    pipeline.write_filter_report(report, out)
    agg = report.aggregate()
    print(
        f"filter sweep: mean fidelity raw {agg['mean_raw_fidelity']:.5f}, "
        f"compensated {agg['mean_compensated_fidelity']:.5f} "
        f"(delta_phi {report.delta_phi_used:+.5f} rad) -> {out}"
    )
    return EXIT_NUMERIC if _all_failed(report) else EXIT_OK


def cmd_hom_scan(args):
    cfg = _config(args)
    rows, summary = pipeline.run_hom_scan(cfg)
    out = _out_dir(args)
    pipeline.write_hom_report(rows, summary, out)
    print(f"HOM scan: visibility {summary['scan_visibility']:.5f} -> {out}")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _config(args)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    sweeps = ["phase", "filter"] if args.sweep == "both" else [args.sweep]
    n = 0
    for sweep in sweeps:
        grid = cfg.phase_grid if sweep == "phase" else cfg.theta_grid
        for i in range(len(grid)):
            data = pipeline.simulate_point(cfg, sweep, i)
            tomo.write_dataset(data, out / f"dataset_{sweep}_{i:02d}.csv")
            n += 1
    print(f"wrote {n} dataset files -> {out}")
    return EXIT_OK


def cmd_reconstruct(args):
    cfg = _config(args)
    data = tomo.read_dataset(args.dataset)
    if args.target:
        target = ProgramSetting.parse(args.target)
    elif data.program is not None:
        target = data.program
    else:
        raise pipeline.ConfigError("no --target given and the dataset names no program")
    res, report = pipeline.reconstruct_dataset(data, target, cfg.mle)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.dataset).stem
    pipeline.dump_json(report, out / f"reconstruct_{name}.json")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if res.converged else EXIT_NUMERIC


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML/JSON key-value config; every field optional")
    common.add_argument("--seed", type=int, help="override the base RNG seed")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--noiseless", action="store_true", help="use exact expected counts instead of Poisson draws")
    common.add_argument("--delta-phi", type=float, metavar="RAD", help="compensation offset instead of the fitted one")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="polgate", description="Programmable polarization phase gate: simulation and tomography.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("sweep-phase", parents=[common], help="tomography over the phase grid").set_defaults(func=cmd_sweep_phase)
    sub.add_parser("sweep-filter", parents=[common], help="tomography over the filter-angle grid").set_defaults(
        func=cmd_sweep_filter
    )
    sub.add_parser("hom-scan", parents=[common], help="HOM dip against delay").set_defaults(func=cmd_hom_scan)
    p = sub.add_parser("simulate", parents=[common], help="write dataset files only")
    p.add_argument("--sweep", choices=["phase", "filter", "both"], default="both")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("reconstruct", parents=[common], help="run MLE on a dataset file")
    p.add_argument("dataset", help="dataset CSV")
    p.add_argument("--target", help="ideal process, e.g. phase:0.785 or filter:0.39 (default: from file)")
    p.set_defaults(func=cmd_reconstruct)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    log.debug("kernel backend: %s", backend_name())
    try:
        return args.func(args)
    except pipeline.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except tomo.DatasetError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
