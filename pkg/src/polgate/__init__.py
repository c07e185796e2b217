"""Simulation and process tomography of a PBS-based programmable phase gate."""
from .metrics import (
    average_state_fidelity,
    compensate_choi,
    effective_phase,
    fit_phase_offset,
    horodecki_avg,
    ideal_choi_filter,
    ideal_choi_phase,
    process_fidelity,
    state_fidelity,
)
from .optics import (
    Filter,
    HomModel,
    PbsModel,
    Phase,
    ProgramSetting,
    apply_process,
    choi_from_kraus,
    effective_kraus,
    hom_scan,
    ideal_phase_unitary,
    pbs_coincidence,
    program_ket,
    success_probability,
)
from .tomo import MleOptions, canonical_settings, mle_reconstruct, simulate_counts

__version__ = "0.1.0"
