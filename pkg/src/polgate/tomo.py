"""Process tomography: measurement model, count simulation and ML reconstruction.

The data photon is prepared in each of the six states H, V, +, -, R, L and
projected onto the same six states, giving 36 settings. A setting's
measurement operator is M = (|in><in|)^T (x) |proj><proj|, so that the
click probability for a process with Choi matrix chi is Tr[chi M].

Reconstruction maximizes sum_j f_j ln(p_j / sum_k p_k) over PSD chi with
the diluted R-chi-R fixed-point iteration. Because the six-state analysis
sums to 9 times the identity, normalizing the probabilities is the same as
working at fixed Tr chi, and the physical trace is restored afterwards from
the rate calibration.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .optics import STATE_LABELS, STATES, ProgramSetting
from .qmath import ket_to_projector

PROBABILITY_FLOOR = 1e-12
DEFAULT_EXPOSURE = 50.0  # 5 s x 10 repetitions per setting
# H-H probability of the ideal gate is 1/4, so 5200/s puts a full
# analysis basis (e.g. H + V clicks) at the reported ~1300/s twofold rate.
DEFAULT_RATE = 5200.0


class DatasetError(ValueError):
    """Malformed, incomplete or empty tomography data."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MeasurementSetting(NamedTuple):
    input: str
    projector: str

    @property
    def input_ket(self):
        return STATES[self.input]

    @property
    def projector_ket(self):
        return STATES[self.projector]


def canonical_settings():
    """36 settings, inputs outer loop, projectors inner loop, order H V + - R L."""
    return [MeasurementSetting(i, p) for i in STATE_LABELS for p in STATE_LABELS]


def measurement_operator(s):
    rho_t = ket_to_projector(s.input_ket).T
    return np.kron(rho_t, ket_to_projector(s.projector_ket))


def measurement_operators(settings=None):
    settings = canonical_settings() if settings is None else settings
    return np.ascontiguousarray(np.stack([measurement_operator(s) for s in settings]))


def expected_probability(k, s):
    """|<proj| K |input>|^2."""
    amp = np.vdot(s.projector_ket, np.asarray(k) @ s.input_ket)
    return float(abs(amp) ** 2)


@dataclass(frozen=True)
class CountRecord:
    setting: MeasurementSetting
    counts: float
    exposure: float

    def __post_init__(self):
        if not (self.counts >= 0 and math.isfinite(self.counts)):
            raise DatasetError(f"counts must be finite and non-negative, got {self.counts}")
        if not self.exposure > 0:
            raise DatasetError(f"exposure must be positive, got {self.exposure}")


@dataclass
class TomographyDataset:
    records: list
    program: ProgramSetting = None
    rate_calibration: float = DEFAULT_RATE
    seed: int = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_records(self.records)

    def counts(self):
        return np.array([r.counts for r in self.records], dtype=float)

    def exposures(self):
        return np.array([r.exposure for r in self.records], dtype=float)

    def settings(self):
        return [r.setting for r in self.records]

    def frequencies(self):
        c = self.counts()
        total = c.sum()
        if total <= 0:
            raise DatasetError("dataset contains no counts")
        return c / total


def validate_records(records):
    """Require exactly one record per canonical (input, projector) pair."""
    seen = {}
    for rec in records:
        if rec.setting in seen:
            raise DatasetError(f"duplicate record for input {rec.setting.input}, projector {rec.setting.projector}")
        seen[rec.setting] = rec
    missing = [s for s in canonical_settings() if s not in seen]
    if missing:
        names = ", ".join(f"({s.input}, {s.projector})" for s in missing)
        raise DatasetError(f"missing records for (input, projector): {names}")


def simulate_counts(k, program, exposure=DEFAULT_EXPOSURE, rate_calibration=DEFAULT_RATE, seed=0, noiseless=False):
    """Coincidence counts for all 36 settings, Poisson(rate * exposure * p).

    With ``noiseless`` the counts are the exact expected values.
    """
    if not exposure > 0:
        raise ValueError("exposure must be positive")
    if rate_calibration < 0:
        raise ValueError("rate calibration must be non-negative")
    # Philox is counter based; one spawned stream per setting index keeps each
    # setting's draw independent of evaluation order.
    streams = np.random.SeedSequence(seed).spawn(36)
    records = []
    for j, s in enumerate(canonical_settings()):
        mean = rate_calibration * exposure * expected_probability(k, s)
        if noiseless:
            n = mean
        else:
            rng = np.random.Generator(np.random.Philox(streams[j]))
            n = float(rng.poisson(mean))
        records.append(CountRecord(s, n, float(exposure)))
    return TomographyDataset(
        records,
        program=program,
        rate_calibration=float(rate_calibration),
        seed=seed,
        metadata={"noiseless": bool(noiseless)},
    )


def _probabilities(chi, ops):
    return np.einsum("ab,jba->j", chi, ops).real


def loglikelihood(chi, data, floor=PROBABILITY_FLOOR):
    """sum_j f_j ln(p_j / sum_k p_k), probabilities clamped at ``floor``."""
    f = data.frequencies()
    p = _probabilities(np.asarray(chi, dtype=complex), measurement_operators(data.settings()))
    s = p.sum()
    if s <= 0:
        return -math.inf
    mask = f > 0
    return float(np.dot(f[mask], np.log(np.maximum(p[mask], floor))) - f[mask].sum() * math.log(s))


@dataclass
class MleOptions:
    max_iter: int = 100_000
    tol: float = 1e-10
    dilution: tuple = tuple(_kernels.DEFAULT_EPS_SCHEDULE)
    floor: float = PROBABILITY_FLOOR


@dataclass
class MleResult:
    chi: np.ndarray
    log_likelihood_trace: np.ndarray
    iterations: int
    converged: bool
    floor: float = PROBABILITY_FLOOR
    seed: int = None

    @property
    def log_likelihood(self):
        return float(self.log_likelihood_trace[-1])

    def to_dict(self):
        flat = self.chi.reshape(-1)
        return {
            "chi": [[float(z.real), float(z.imag)] for z in flat],
            "layout": "row-major 4x4, input (x) output, basis H,V",
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "log_likelihood": self.log_likelihood,
            "floor": self.floor,
            "seed": self.seed,
        }


def mle_reconstruct(data, opts=None):
    """Maximum-likelihood Choi matrix for a tomography dataset.

    Starts from the maximally mixed 1/4, iterates chi <- R chi R at unit
    trace, falling back to diluted steps whenever a full step would lower
    the likelihood, and stops once the relative likelihood gain drops below
    ``opts.tol``. The returned chi is rescaled so that
    rate * exposure * Tr[chi M_j] reproduces the total count.
    """
    opts = MleOptions() if opts is None else opts
    counts = data.counts()
    total = counts.sum()
    if total <= 0:
        raise DatasetError("all counts are zero; nothing to reconstruct")
    f = counts / total
    ops = measurement_operators(data.settings())
    chi0 = np.eye(4, dtype=complex) / 4
    eps = np.asarray(opts.dilution, dtype=float)
    chi, trace, iterations, converged = _kernels.mle_loop(
        ops, f, chi0, int(opts.max_iter), float(opts.tol), float(opts.floor), eps
    )
    chi = np.array(chi)
    # sum_j M_j = 9 * 1 for the six-state scheme, weighted by exposure in general
    expo = data.exposures()
    expected_unit = float(np.sum(expo * _probabilities(chi, ops)))
    if data.rate_calibration and data.rate_calibration > 0 and expected_unit > 0:
        chi = chi * (total / (data.rate_calibration * expected_unit))
    return MleResult(chi, np.array(trace), int(iterations), bool(converged), float(opts.floor), data.seed)


# -- file formats -------------------------------------------------------------

FIELDS = ("input_label", "projector_label", "counts", "exposure_s")


def _fmt_number(x):
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def dumps_dataset(data):
    """CSV text: ``#key=value`` metadata lines, then a header and 36 rows."""
    buf = io.StringIO()
    if data.program is not None:
        buf.write(f"#program={data.program.mode}:{data.program.angle!r}\n")
    buf.write(f"#rate_calibration={data.rate_calibration!r}\n")
    if data.seed is not None:
        buf.write(f"#seed={data.seed}\n")
    for key in sorted(data.metadata):
        buf.write(f"#{key}={json.dumps(data.metadata[key])}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for rec in data.records:
        w.writerow([rec.setting.input, rec.setting.projector, _fmt_number(rec.counts), _fmt_number(rec.exposure)])
    return buf.getvalue()


def write_dataset(data, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_dataset(data))


def loads_dataset(text, rate_calibration=None):
    """Parse the dataset CSV; errors carry the offending line number."""
    meta = {}
    records = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        cells = [c.strip() for c in next(csv.reader([line]))]
        if not header_seen:
            if tuple(cells) != FIELDS:
                raise DatasetError(f"expected header {','.join(FIELDS)}", lineno)
            header_seen = True
            continue
        if len(cells) != 4:
            raise DatasetError(f"expected 4 fields, got {len(cells)}", lineno)
        inp, proj, cnt, expo = cells
        for label in (inp, proj):
            if label not in STATES:
                raise DatasetError(f"unknown state label {label!r}; use one of {','.join(STATE_LABELS)}", lineno)
        try:
            rec = CountRecord(MeasurementSetting(inp, proj), float(cnt), float(expo))
        except ValueError as exc:
            raise DatasetError(str(exc), lineno) from None
        records.append(rec)
    if not header_seen:
        raise DatasetError("empty dataset file")
    program = ProgramSetting.parse(meta["program"]) if "program" in meta else None
    if rate_calibration is None:
        rate_calibration = float(meta.get("rate_calibration", DEFAULT_RATE))
    seed = int(meta["seed"]) if "seed" in meta else None
    extra = {k: json.loads(v) for k, v in meta.items() if k not in ("program", "rate_calibration", "seed")}
    return TomographyDataset(records, program=program, rate_calibration=rate_calibration, seed=seed, metadata=extra)


def read_dataset(path, rate_calibration=None):
    with open(path, encoding="utf-8") as fh:
        return loads_dataset(fh.read(), rate_calibration)
