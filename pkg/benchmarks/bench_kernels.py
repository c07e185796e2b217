"""Compare the numba and pure-numpy kernel paths.

Times one maximum-likelihood reconstruction on a representative dataset and a
batch of 4x4 Jacobi eigen-decompositions with each backend, and checks that
both give the same answer. The numpy path is the one used when
POLGATE_NUMBA=0 is set.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from polgate import _kernels, optics, tomo
from polgate._accel import NUMBA_ENABLED


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def mle_inputs(phi=1.3, seed=0):
    k = optics.effective_kraus(optics.Phase(phi), optics.PbsModel.measured())
    data = tomo.simulate_counts(k, optics.Phase(phi), seed=seed)
    f = data.frequencies()
    ops = tomo.measurement_operators(data.settings())
    opts = tomo.MleOptions()
    args = (ops, f, np.eye(4, dtype=complex) / 4, opts.max_iter, opts.tol, opts.floor, np.asarray(opts.dilution))
    return args


def random_hermitian(rng, n):
    out = []
    for _ in range(n):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        out.append(a + a.conj().T)
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--matrices", type=int, default=2000)
    args = parser.parse_args()
    if not NUMBA_ENABLED:
        raise SystemExit("numba is unavailable or disabled by POLGATE_NUMBA; nothing to compare")

    mle_args = mle_inputs()
    nb_mle = _kernels.mle_loop_numba
    nb_mle(*mle_args)  # compile outside the timed region

    t_np, (chi_np, trace_np, it_np, _) = best_of(lambda: _kernels._mle_loop_numpy(*mle_args), args.repeat)
    t_nb, (chi_nb, trace_nb, it_nb, _) = best_of(lambda: nb_mle(*mle_args), args.repeat)
    print(f"MLE reconstruction ({it_np} / {it_nb} iterations)")
    print(f"  numpy  {t_np * 1e3:9.1f} ms")
    print(f"  numba  {t_nb * 1e3:9.1f} ms   speedup x{t_np / t_nb:.1f}")
    print(f"  max |chi_np - chi_nb| = {np.abs(chi_np - chi_nb).max():.1e}, dlogL = {abs(trace_np[-1] - trace_nb[-1]):.1e}")

    mats = random_hermitian(np.random.default_rng(1), args.matrices)
    _kernels.jacobi_eigvalsh(mats[0])

    def run(fn):
        return [fn(m) for m in mats]

    t_py, ev_py = best_of(lambda: run(_kernels._jacobi_eigvalsh), 1)
    t_jit, ev_jit = best_of(lambda: run(_kernels.jacobi_eigvalsh), args.repeat)
    t_lapack, ev_lapack = best_of(lambda: run(np.linalg.eigvalsh), args.repeat)
    err = max(np.abs(a - b).max() for a, b in zip(ev_jit, ev_lapack))
    print(f"Jacobi eigenvalues, {len(mats)} Hermitian 4x4 matrices")
    print(f"  python {t_py * 1e3:9.1f} ms")
    print(f"  numba  {t_jit * 1e3:9.1f} ms   speedup x{t_py / t_jit:.1f}")
    print(f"  LAPACK {t_lapack * 1e3:9.1f} ms   (reference)")
    print(f"  max deviation from LAPACK = {err:.1e}")
    assert max(np.abs(a - b).max() for a, b in zip(ev_py, ev_jit)) < 1e-12


if __name__ == "__main__":
    main()
