"""Hot numeric kernels with a numba path and a pure-numpy path.

Two routines dominate runtime: the fixed-point maximum-likelihood loop
(tens of thousands of 4x4 updates per reconstruction) and the Jacobi
eigensolver used for positivity checks. Both are written as explicit loops
that numba compiles; when numba is disabled the MLE loop switches to an
einsum-vectorized numpy implementation and the eigensolver runs as plain
Python (it only ever sees 4x4 input).
"""
import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

DEFAULT_EPS_SCHEDULE = np.array([1.0, 0.5, 0.1, 1e-2, 1e-3])


def _jacobi_eigvalsh(a, tol=1e-14, max_sweeps=64):
    """Eigenvalues of a small Hermitian matrix by cyclic complex Jacobi rotations.

    Returns the eigenvalues in ascending order. ``tol`` bounds the
    off-diagonal Frobenius norm relative to the full norm.
    """
    n = a.shape[0]
    w = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            w[i, j] = 0.5 * (a[i, j] + np.conj(a[j, i]))
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += w[i, j].real ** 2 + w[i, j].imag ** 2
    scale = math.sqrt(total)
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += w[i, j].real ** 2 + w[i, j].imag ** 2
        if math.sqrt(off) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = w[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                app = w[p, p].real
                aqq = w[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # J = [[c, s], [-s conj(phase), c conj(phase)]] on the (p, q) block
                ph_c = np.conj(phase)
                for k in range(n):
                    akp = w[k, p]
                    akq = w[k, q]
                    w[k, p] = c * akp - s * ph_c * akq
                    w[k, q] = s * akp + c * ph_c * akq
                for k in range(n):
                    apk = w[p, k]
                    aqk = w[q, k]
                    w[p, k] = c * apk - s * phase * aqk
                    w[q, k] = s * apk + c * phase * aqk
                w[p, q] = 0.0
                w[q, p] = 0.0
                w[p, p] = w[p, p].real
                w[q, q] = w[q, q].real
    out = np.empty(n)
    for i in range(n):
        out[i] = w[i, i].real
    return np.sort(out)


jacobi_eigvalsh = njit(_jacobi_eigvalsh)
_jacobi_nb = jacobi_eigvalsh


def _probabilities_loops(chi, ops, out):
    for j in range(ops.shape[0]):
        acc = 0.0
        for a in range(4):
            for b in range(4):
                acc += (chi[a, b] * ops[j, b, a]).real
        out[j] = acc


def _loglik_loops(p, f, floor):
    s = 0.0
    for j in range(p.shape[0]):
        s += p[j]
    if s <= 0.0:
        return -np.inf
    ftot = 0.0
    acc = 0.0
    for j in range(p.shape[0]):
        if f[j] > 0.0:
            acc += f[j] * math.log(max(p[j], floor))
            ftot += f[j]
    return acc - ftot * math.log(s)


def _conjugate_normalized(r, chi, out):
    tmp = np.zeros((4, 4), dtype=np.complex128)
    for a in range(4):
        for b in range(4):
            acc = 0.0j
            for c in range(4):
                acc += r[a, c] * chi[c, b]
            tmp[a, b] = acc
    for a in range(4):
        for b in range(4):
            acc = 0.0j
            for c in range(4):
                acc += tmp[a, c] * r[c, b]
            out[a, b] = acc
    tr = 0.0
    for a in range(4):
        tr += out[a, a].real
    for a in range(4):
        for b in range(a, 4):
            v = 0.5 * (out[a, b] + np.conj(out[b, a])) / tr
            out[a, b] = v
            out[b, a] = np.conj(v)


_probabilities_nb = njit(_probabilities_loops)
_loglik_nb = njit(_loglik_loops)
_conjugate_nb = njit(_conjugate_normalized)


def _mle_loop_loops(ops, f, chi0, max_iter, tol, floor, eps_schedule):
    n = ops.shape[0]
    chi = chi0.copy()
    trace = np.empty(max_iter + 1)
    p = np.empty(n)
    _probabilities_nb(chi, ops, p)
    ll = _loglik_nb(p, f, floor)
    trace[0] = ll
    cand = np.empty((4, 4), dtype=np.complex128)
    r = np.empty((4, 4), dtype=np.complex128)
    re = np.empty((4, 4), dtype=np.complex128)
    pc = np.empty(n)
    it = 0
    converged = False
    small_step = False
    while it < max_iter:
        for a in range(4):
            for b in range(4):
                r[a, b] = 0.0
        for j in range(n):
            if f[j] > 0.0:
                w = f[j] / max(p[j], floor)
                for a in range(4):
                    for b in range(4):
                        r[a, b] += w * ops[j, a, b]
        tr_r = 0.0
        for a in range(4):
            tr_r += r[a, a].real
        if small_step:
            # concavity: L* - L <= lambda_max(R) - Tr[R chi]
            r_chi = 0.0
            for a in range(4):
                for b in range(4):
                    r_chi += (r[a, b] * chi[b, a]).real
            gap = _jacobi_nb(r)[3] - r_chi
            if gap <= tol * max(abs(ll), 1e-300):
                converged = True
                break
        accepted = False
        ll_new = ll
        for k in range(eps_schedule.shape[0]):
            eps = eps_schedule[k]
            for a in range(4):
                for b in range(4):
                    re[a, b] = eps * r[a, b]
                re[a, a] += (1.0 - eps) * tr_r / 4.0
            _conjugate_nb(re, chi, cand)
            _probabilities_nb(cand, ops, pc)
            ll_new = _loglik_nb(pc, f, floor)
            if ll_new >= ll:
                accepted = True
                break
        if not accepted:
            converged = True
            break
        it += 1
        for a in range(4):
            for b in range(4):
                chi[a, b] = cand[a, b]
        for j in range(n):
            p[j] = pc[j]
        change = ll_new - ll
        ll = ll_new
        trace[it] = ll
        small_step = change <= tol * max(abs(ll), 1e-300)
    return chi, trace[: it + 1], it, converged


def _mle_loop_numpy(ops, f, chi0, max_iter, tol, floor, eps_schedule):
    chi = chi0.copy()
    mask = f > 0
    fm = f[mask]
    opsm = ops[mask]
    eye = np.eye(4)

    def probs(c):
        return np.einsum("ab,jba->j", c, ops).real

    def loglik(p):
        s = p.sum()
        if s <= 0.0:
            return -np.inf
        return float(np.dot(fm, np.log(np.maximum(p[mask], floor))) - fm.sum() * np.log(s))

    p = probs(chi)
    ll = loglik(p)
    trace = [ll]
    it = 0
    converged = False
    small_step = False
    while it < max_iter:
        r = np.einsum("j,jab->ab", fm / np.maximum(p[mask], floor), opsm)
        tr_r = np.trace(r).real
        if small_step:
            gap = np.linalg.eigvalsh(r)[-1] - np.trace(r @ chi).real
            if gap <= tol * max(abs(ll), 1e-300):
                converged = True
                break
        for eps in eps_schedule:
            re = eps * r + (1.0 - eps) * tr_r / 4.0 * eye
            cand = re @ chi @ re
            cand = 0.5 * (cand + cand.conj().T)
            cand /= np.trace(cand).real
            pc = probs(cand)
            ll_new = loglik(pc)
            if ll_new >= ll:
                break
        else:
            converged = True
            break
        it += 1
        chi, p = cand, pc
        change = ll_new - ll
        ll = ll_new
        trace.append(ll)
        small_step = change <= tol * max(abs(ll), 1e-300)
    return chi, np.array(trace), it, converged


mle_loop_numba = njit(_mle_loop_loops) if NUMBA_ENABLED else None
mle_loop = mle_loop_numba if NUMBA_ENABLED else _mle_loop_numpy
