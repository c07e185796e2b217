"""Two-photon interference on a polarizing beam splitter.

The data photon enters one PBS input port and the program photon the other.
Keeping only events with one photon in each output port and projecting the
program photon onto |+> leaves the data photon transformed by a single
2x2 Kraus operator. With an ideal PBS and program (|H> + e^{i phi}|V>)/sqrt 2
that operator is U(phi)/2.

PBS convention (per polarization, real lossless mode matrices, rows = output
port, columns = input port, index 0 = data side, 1 = program side)::

    H: [[ tH, -rH],      V: [[ tV,  rV],
        [ rH,  tH]]          [ rV, -tV]]

H is designed to be transmitted, V to be reflected. Any remaining phase
between the polarizations is carried by ``delta_phi`` and applied to the
heralded data photon as diag(1, e^{i delta_phi}).
"""
import math
from dataclasses import dataclass

import numpy as np

from .qmath import ket_to_projector

H = np.array([1, 0], dtype=complex)
V = np.array([0, 1], dtype=complex)
PLUS = np.array([1, 1], dtype=complex) / math.sqrt(2)
MINUS = np.array([1, -1], dtype=complex) / math.sqrt(2)
R = np.array([1, 1j], dtype=complex) / math.sqrt(2)
L = np.array([1, -1j], dtype=complex) / math.sqrt(2)

# "P"/"M" stand in for +/- in file formats
STATE_LABELS = ("H", "V", "P", "M", "R", "L")
STATES = {"H": H, "V": V, "P": PLUS, "M": MINUS, "R": R, "L": L}


def pol_ket(a_h, a_v, normalize=False):
    """Polarization ket a_h|H> + a_v|V>."""
    v = np.array([a_h, a_v], dtype=complex)
    if not np.all(np.isfinite(v)):
        raise ValueError("ket amplitudes must be finite")
    if normalize:
        v = v / np.linalg.norm(v)
    return v


@dataclass(frozen=True)
class ProgramSetting:
    """State of the program photon: a phase-gate program or a filter program."""

    mode: str
    angle: float

    def __post_init__(self):
        if self.mode not in ("phase", "filter"):
            raise ValueError(f"unknown program mode {self.mode!r}")
        if not math.isfinite(self.angle):
            raise ValueError("program angle must be finite")

    @classmethod
    def phase(cls, phi):
        return cls("phase", float(phi))

    @classmethod
    def filter(cls, theta):
        return cls("filter", float(theta))

    def label(self):
        return f"{self.mode}:{self.angle:.12g}"

    @classmethod
    def parse(cls, text):
        """Parse ``phase:<rad>`` or ``filter:<rad>``."""
        mode, sep, value = text.partition(":")
        if not sep:
            raise ValueError(f"program setting must look like 'phase:0.5', got {text!r}")
        return cls(mode.strip().lower(), float(value))


def Phase(phi):
    return ProgramSetting.phase(phi)


def Filter(theta):
    return ProgramSetting.filter(theta)


@dataclass(frozen=True)
class PbsModel:
    """Amplitude transmission/reflection per polarization plus the phase offset.

    The model is lossless: tH^2 + rH^2 = tV^2 + rV^2 = 1.
    """

    t_h: float = 1.0
    r_h: float = 0.0
    t_v: float = 0.0
    r_v: float = 1.0
    delta_phi: float = 0.0

    def __post_init__(self):
        for name in ("t_h", "r_h", "t_v", "r_v", "delta_phi"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if abs(self.t_h**2 + self.r_h**2 - 1) > 1e-12 or abs(self.t_v**2 + self.r_v**2 - 1) > 1e-12:
            raise ValueError("PBS model must be lossless (t^2 + r^2 = 1 per polarization)")

    @classmethod
    def ideal(cls, delta_phi=0.0):
        return cls(1.0, 0.0, 0.0, 1.0, float(delta_phi))

    @classmethod
    def from_ratios(cls, v_ratio=(97.7, 2.3), h_ratio=(0.5, 99.5), delta_phi=-0.265):
        """Build from intensity splitting ratios given as reflected:transmitted."""
        rv2 = v_ratio[0] / (v_ratio[0] + v_ratio[1])
        rh2 = h_ratio[0] / (h_ratio[0] + h_ratio[1])
        return cls(
            t_h=math.sqrt(1 - rh2),
            r_h=math.sqrt(rh2),
            t_v=math.sqrt(1 - rv2),
            r_v=math.sqrt(rv2),
            delta_phi=float(delta_phi),
        )

    @classmethod
    def measured(cls):
        """Splitting ratios 97.7:2.3 (V) and 0.5:99.5 (H), offset -0.265 rad."""
        return cls.from_ratios()

    def mode_matrix(self, pol):
        """Real 2x2 port map for polarization 0 (H) or 1 (V); [out_port, in_port]."""
        if pol == 0:
            return np.array([[self.t_h, -self.r_h], [self.r_h, self.t_h]])
        return np.array([[self.t_v, self.r_v], [self.r_v, -self.t_v]])


def ideal_phase_unitary(phi):
    return np.diag([1.0, np.exp(1j * phi)]).astype(complex)


def program_ket(setting):
    if setting.mode == "phase":
        return np.array([1.0, np.exp(1j * setting.angle)], dtype=complex) / math.sqrt(2)
    return np.array([math.cos(setting.angle), math.sin(setting.angle)], dtype=complex)


def pbs_coincidence(data, program, pbs):
    """Post-selected two-photon amplitudes A[x, y] behind the PBS.

    ``x`` is the polarization found in the data output port, ``y`` the one in
    the program output port. Terms with both photons in one port are dropped.
    """
    data = np.asarray(data, dtype=complex)
    program = np.asarray(program, dtype=complex)
    m = (pbs.mode_matrix(0), pbs.mode_matrix(1))
    table = np.zeros((2, 2), dtype=complex)
    for x in range(2):
        for y in range(2):
            amp = data[x] * program[y]
            if amp == 0:
                continue
            # data photon stays on its side, program photon stays on its side
            table[x, y] += amp * m[x][0, 0] * m[y][1, 1]
            # both photons cross over: program photon (pol y) now in data port
            table[y, x] += amp * m[x][1, 0] * m[y][0, 1]
    return table


def effective_kraus(setting, pbs, herald=PLUS):
    """Kraus operator applied to the data photon when the program photon is found in ``herald``."""
    prog = program_ket(setting)
    k = np.empty((2, 2), dtype=complex)
    for col, basis in enumerate((H, V)):
        k[:, col] = pbs_coincidence(basis, prog, pbs) @ np.conj(herald)
    return ideal_phase_unitary(pbs.delta_phi) @ k


def choi_from_kraus(k):
    """(1 x K)|Phi+><Phi+|(1 x K^dag) with unnormalized |Phi+> = |HH> + |VV>."""
    k = np.asarray(k, dtype=complex)
    vec = np.concatenate([k[:, 0], k[:, 1]])
    return np.outer(vec, vec.conj())


def apply_process(chi, rho):
    """rho_out = Tr_in[(rho^T x 1) chi]; the trace of the result is the success probability."""
    chi = np.asarray(chi, dtype=complex).reshape(2, 2, 2, 2)
    rho = np.asarray(rho, dtype=complex)
    # (rho^T)_{ij} = rho_{ji}
    return np.einsum("ji,jaib->ab", rho, chi)


def apply_kraus(k, rho):
    k = np.asarray(k, dtype=complex)
    return k @ np.asarray(rho, dtype=complex) @ k.conj().T


def success_probability(k, rho):
    return float(np.trace(apply_kraus(k, rho)).real)


@dataclass(frozen=True)
class HomModel:
    """Hong-Ou-Mandel dip parameters.

    ``overlap`` is the mode indistinguishability, ``coherence_time`` the
    Gaussian width of the dip in seconds, ``baseline_rate`` the coincidence
    rate far from the dip in counts/s.
    """

    overlap: float = 0.995
    coherence_time: float = 0.5e-12
    baseline_rate: float = 1000.0

    def __post_init__(self):
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError("overlap must lie in [0, 1]")
        if not self.coherence_time > 0:
            raise ValueError("coherence_time must be positive")


def _analysis_port_amplitudes(pol_ket, pbs):
    """Amplitudes over (port, polarization) for one photon sent into the analysis PBS."""
    out = np.zeros((2, 2), dtype=complex)
    for pol in range(2):
        col = pbs.mode_matrix(pol)[:, 0]
        for port in range(2):
            out[port, pol] += col[port] * pol_ket[pol]
    return out


def hom_optics_visibility(analysis_pbs):
    """Dip visibility for data H / program V sent together to the data port.

    The half-wave plate maps H -> |+>, V -> |->; the analysis PBS then splits
    towards two detectors. Visibility = 1 - P_indist / P_dist for D1-D2
    coincidences.
    """
    f1 = _analysis_port_amplitudes(PLUS, analysis_pbs)
    f2 = _analysis_port_amplitudes(MINUS, analysis_pbs)
    p_ind = 0.0
    p_dist = 0.0
    for a in range(2):
        for b in range(2):
            p_ind += abs(f1[0, a] * f2[1, b] + f2[0, a] * f1[1, b]) ** 2
            p_dist += abs(f1[0, a] * f2[1, b]) ** 2 + abs(f2[0, a] * f1[1, b]) ** 2
    if p_dist == 0:
        return 0.0
    return 1.0 - p_ind / p_dist


def hom_scan(delays, hom, pbs):
    """Coincidence rate against delay for the HOM-dip configuration.

    ``pbs`` is the polarization analyser in front of the detectors.
    Returns a list of (delay, rate) tuples.
    """
    if not hom.coherence_time > 0:
        raise ValueError("coherence_time must be positive")
    vis = hom.overlap * hom_optics_visibility(pbs)
    out = []
    for tau in delays:
        g = math.exp(-(tau**2) / (2 * hom.coherence_time**2))
        out.append((float(tau), hom.baseline_rate * (1.0 - vis * g)))
    return out


STATE_PROJECTORS = {k: ket_to_projector(v) for k, v in STATES.items()}
