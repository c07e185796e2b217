"""Figures of merit and phase calibration for reconstructed processes."""
import math
from dataclasses import dataclass

import numpy as np

from .optics import STATE_LABELS, STATES, apply_process, choi_from_kraus, ideal_phase_unitary
from .qmath import ket_to_projector

TWO_PI = 2.0 * math.pi


def ideal_choi_phase(phi):
    return choi_from_kraus(ideal_phase_unitary(phi))


def ideal_choi_filter(theta):
    """Choi matrix of the ideal filter diag(cos theta, sin theta); trace 1."""
    v = np.array([math.cos(theta), 0.0, 0.0, math.sin(theta)], dtype=complex)
    return np.outer(v, v.conj())


def process_fidelity(chi, chi_id):
    """Tr[chi chi_id] / (Tr chi Tr chi_id); chi_id is assumed rank one."""
    chi = np.asarray(chi, dtype=complex)
    chi_id = np.asarray(chi_id, dtype=complex)
    tr_a = np.trace(chi).real
    tr_b = np.trace(chi_id).real
    if tr_a <= 0 or tr_b <= 0:
        raise ValueError("process fidelity needs operators with positive trace")
    return float(np.trace(chi @ chi_id).real / (tr_a * tr_b))


def effective_phase(chi, rel_threshold=1e-12):
    """Phase in [0, 2 pi) maximizing Tr[chi chi_id(phi)].

    The overlap equals chi_00 + chi_33 + 2|chi_30| cos(phi - arg chi_30), so
    the maximizer is arg chi_30. Returns None when the H-V coherence is below
    ``rel_threshold`` times the trace (phase-insensitive process).
    """
    chi = np.asarray(chi, dtype=complex)
    tr = np.trace(chi).real
    if tr <= 0:
        raise ValueError("effective phase needs a process with positive trace")
    c30 = chi[3, 0]
    if 2 * abs(c30) < rel_threshold * tr:
        return None
    return float(math.atan2(c30.imag, c30.real) % TWO_PI)


def effective_phase_grid(chi, step=1e-3):
    """Grid search plus parabolic refinement of the same maximization."""
    grid = np.arange(0.0, TWO_PI, step)
    vals = np.array([np.trace(chi @ ideal_choi_phase(p)).real for p in grid])
    i = int(np.argmax(vals))
    y0, y1, y2 = vals[i - 1], vals[i], vals[(i + 1) % len(vals)]
    denom = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    return float((grid[i] + shift * step) % TWO_PI)


def wrap_phase(x):
    """Map to (-pi, pi]."""
    y = math.fmod(x, TWO_PI)
    if y <= -math.pi:
        y += TWO_PI
    elif y > math.pi:
        y -= TWO_PI
    return y


def unwrap_sequence(values):
    """Shift each value by multiples of 2 pi so successive steps lie in (-pi, pi]."""
    out = [float(values[0])]
    for v in values[1:]:
        step = wrap_phase(float(v) - out[-1])
        out.append(out[-1] + step)
    return np.array(out)


@dataclass
class PhaseFit:
    slope: float
    offset: float
    residuals: np.ndarray

    @property
    def rms(self):
        return float(np.sqrt(np.mean(self.residuals**2)))


def fit_phase_offset(points):
    """Least-squares line phi_eff = slope * phi + offset on the unwrapped branch.

    ``points`` is a sequence of (phi, phi_eff). The offset is reported in
    (-pi, pi].
    """
    pts = sorted((float(a), float(b)) for a, b in points)
    if len(pts) < 2:
        raise ValueError("need at least two points to fit a phase offset")
    x = np.array([p[0] for p in pts])
    if np.ptp(x) == 0:
        raise ValueError("all programmed phases are identical")
    y = unwrap_sequence([p[1] for p in pts])
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - (slope * x + intercept)
    return PhaseFit(float(slope), wrap_phase(float(intercept)), residuals)


def compensate_choi(chi, delta_phi):
    """Undo a known output phase offset: (1 x U(-d)) chi (1 x U(-d))^dag."""
    w = np.kron(np.eye(2), ideal_phase_unitary(-delta_phi))
    return w @ np.asarray(chi, dtype=complex) @ w.conj().T


def state_fidelity(psi, rho):
    """<psi|rho|psi> / Tr rho."""
    rho = np.asarray(rho, dtype=complex)
    tr = np.trace(rho).real
    if tr <= 0:
        raise ValueError("state fidelity needs a state with positive trace")
    psi = np.asarray(psi, dtype=complex)
    return float(np.vdot(psi, rho @ psi).real / tr)


def _as_choi(process):
    process = np.asarray(process, dtype=complex)
    if process.shape == (2, 2):
        return choi_from_kraus(process)
    if process.shape == (4, 4):
        return process
    raise ValueError(f"expected a 2x2 Kraus operator or 4x4 Choi matrix, got {process.shape}")


def average_state_fidelity(process, phi):
    """Mean fidelity of the outputs with U(phi)|in> over the six canonical inputs."""
    chi = _as_choi(process)
    u = ideal_phase_unitary(phi)
    fids = []
    for label in STATE_LABELS:
        psi = STATES[label]
        out = apply_process(chi, ket_to_projector(psi))
        fids.append(state_fidelity(u @ psi, out))
    return float(np.mean(fids))


def horodecki_avg(f_chi):
    return (2.0 * f_chi + 1.0) / 3.0
