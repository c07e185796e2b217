"""Small dense complex linear algebra for qubit and two-qubit operators.

Two-qubit operators are ordered input (x) output, with the {H, V}
polarization basis mapped to computational indices {0, 1}. Every Choi
matrix in the package follows this convention.
"""
import math

import numpy as np

from ._kernels import jacobi_eigvalsh

HERMITIAN_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class InvalidOperatorError(ValueError):
    """Raised when an operator violates a shape or Hermiticity contract."""


def _check_shape(m, shape, name="matrix"):
    m = np.asarray(m, dtype=complex)
    if m.shape != shape:
        raise InvalidOperatorError(f"{name} must have shape {shape}, got {m.shape}")
    return m


def dagger(m):
    return np.conj(np.asarray(m)).T


def kron(a, b):
    """Tensor product of two 2x2 operators, first factor = input space."""
    a = _check_shape(a, (2, 2), "first factor")
    b = _check_shape(b, (2, 2), "second factor")
    return np.kron(a, b)


def partial_trace_in(m):
    """Trace out the first (input) factor of a 4x4 operator."""
    m = _check_shape(m, (4, 4))
    return np.einsum("iaib->ab", m.reshape(2, 2, 2, 2))


def partial_trace_out(m):
    m = _check_shape(m, (4, 4))
    return np.einsum("aibi->ab", m.reshape(2, 2, 2, 2))


def transpose(m):
    """Transpose in the fixed {H, V} basis."""
    return np.asarray(m).T.copy()


def ket_to_projector(v):
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def is_hermitian(m, tol=HERMITIAN_TOL):
    m = np.asarray(m)
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    return bool(np.abs(m - dagger(m)).max(initial=0.0) <= tol * scale)


def eigvalsh_small(m):
    """Ascending eigenvalues of a Hermitian 2x2 (closed form) or 4x4 (Jacobi) matrix."""
    m = np.asarray(m, dtype=complex)
    if m.shape == (2, 2):
        a = m[0, 0].real
        d = m[1, 1].real
        b = abs(m[0, 1])
        mean = 0.5 * (a + d)
        rad = math.hypot(0.5 * (a - d), b)
        return np.array([mean - rad, mean + rad])
    if m.shape == (4, 4):
        return jacobi_eigvalsh(np.ascontiguousarray(m))
    raise InvalidOperatorError(f"expected a 2x2 or 4x4 matrix, got shape {m.shape}")


def min_eigenvalue(m, hermitian=True):
    """Smallest eigenvalue of a Hermitian matrix.

    Raises InvalidOperatorError if ``m`` is not Hermitian within tolerance.
    """
    if not hermitian or not is_hermitian(m):
        raise InvalidOperatorError("min_eigenvalue requires a Hermitian matrix")
    return float(eigvalsh_small(m)[0])


def is_psd(m, rel_tol=1e-9):
    """Hermitian with smallest eigenvalue >= -rel_tol * trace."""
    if not is_hermitian(m):
        return False
    tr = float(np.trace(m).real)
    return min_eigenvalue(m) >= -rel_tol * max(abs(tr), 1e-300)
