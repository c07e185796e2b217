"""The numba and numpy code paths must agree."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from polgate import _kernels, metrics, optics, tomo
from polgate._accel import NUMBA_ENABLED

from conftest import random_matrix


def _dataset_arrays(seed=5, pbs=None):
    pbs = pbs or optics.PbsModel.measured()
    setting = optics.Phase(1.1)
    data = tomo.simulate_counts(optics.effective_kraus(setting, pbs), setting, seed=seed)
    c = data.counts()
    return tomo.measurement_operators(), c / c.sum()


def _run(loop, max_iter=3000, tol=1e-10):
    ops, f = _dataset_arrays()
    chi0 = np.eye(4, dtype=complex) / 4
    return loop(ops, f, chi0, max_iter, tol, 1e-12, _kernels.DEFAULT_EPS_SCHEDULE)


def test_python_loop_matches_numpy_path():
    # the uncompiled loop version is the numba source; compare on a short run
    a = _run(_kernels._mle_loop_loops, max_iter=40, tol=0.0)
    b = _run(_kernels._mle_loop_numpy, max_iter=40, tol=0.0)
    assert a[2] == b[2] == 40
    assert np.abs(a[0] - b[0]).max() < 1e-12
    assert np.abs(a[1] - b[1]).max() < 1e-12


@pytest.mark.skipif(not NUMBA_ENABLED, reason="numba path disabled")
def test_numba_matches_numpy_to_convergence():
    a = _run(_kernels.mle_loop_numba, max_iter=100_000)
    b = _run(_kernels._mle_loop_numpy, max_iter=100_000)
    assert a[3] and b[3]
    # summation order differs, so the stopping iteration may too
    assert np.abs(a[0] - b[0]).max() < 1e-6
    assert abs(a[1][-1] - b[1][-1]) < 1e-10


def test_jacobi_python_and_compiled_agree(rng):
    for _ in range(50):
        a = random_matrix(rng, 4)
        h = np.ascontiguousarray(a + a.conj().T)
        assert np.abs(_kernels._jacobi_eigvalsh(h) - _kernels.jacobi_eigvalsh(h)).max() < 1e-12


def test_env_flag_selects_numpy_backend():
    script = (
        "import json; from polgate import _accel, optics, tomo, metrics\n"
        "s = optics.Phase(0.9); k = optics.effective_kraus(s, optics.PbsModel.measured())\n"
        "r = tomo.mle_reconstruct(tomo.simulate_counts(k, s, seed=2))\n"
        "print(json.dumps([_accel.backend_name(), metrics.process_fidelity(r.chi, metrics.ideal_choi_phase(0.9))]))\n"
    )
    env = dict(os.environ, POLGATE_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, text=True, check=True)
    backend, fid = json.loads(out.stdout)
    assert backend == "numpy"
    s = optics.Phase(0.9)
    r = tomo.mle_reconstruct(tomo.simulate_counts(optics.effective_kraus(s, optics.PbsModel.measured()), s, seed=2))
    # the backends round differently, so they may stop a few iterations apart
    assert abs(fid - metrics.process_fidelity(r.chi, metrics.ideal_choi_phase(0.9))) < 1e-6
