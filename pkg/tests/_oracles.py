"""Independent brute-force constructions used as test oracles.

Everything here is built from first principles (Pauli matrices, Kronecker
products, dense matrix exponentials, hand-expanded determinants) and never
calls the code paths it checks.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def site_operator(op: np.ndarray, site: int, n: int) -> np.ndarray:
    """Embed a one-site operator; site q lives on bit q-1 of the index."""
    out = np.array([[1.0 + 0j]])
    for q in range(n, 0, -1):
        out = np.kron(out, op if q == site else I2)
    return out


def pauli_xx_hamiltonian(d: np.ndarray) -> np.ndarray:
    """Full 2**n x 2**n flip-flop Hamiltonian from spin-1/2 operators."""
    n = d.shape[0]
    dim = 2 ** n
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if d[i - 1, j - 1] == 0:
                continue
            ix_i, iy_i = site_operator(SX, i, n) / 2, site_operator(SY, i, n) / 2
            ix_j, iy_j = site_operator(SX, j, n) / 2, site_operator(SY, j, n) / 2
            h += d[i - 1, j - 1] * (ix_i @ ix_j + iy_i @ iy_j)
    return h


def restrict_to_sector(h_full: np.ndarray, masks) -> np.ndarray:
    idx = np.asarray(list(masks), dtype=np.int64)
    return h_full[np.ix_(idx, idx)]


def expm_propagator(h: np.ndarray, tau: float) -> np.ndarray:
    return scipy.linalg.expm(-1j * h * tau)


def cubic_from_gram(g: np.ndarray) -> np.ndarray:
    """Hand-expanded degree-3 polynomial in x = |lambda|**2, monic descending.

    Expansion of x*det(G'-xI) - det(G-x*diag(1,1,0)) for a 3x3 Gram matrix;
    the cyclic product term carries the factor two required for consistency
    with the determinant form (both cyclic orientations contribute).
    """
    assert g.shape == (3, 3)
    g00, g11, g22 = (g[i, i].real for i in range(3))
    a01, a02, a12 = abs(g[0, 1]) ** 2, abs(g[0, 2]) ** 2, abs(g[1, 2]) ** 2
    cyc = (g[0, 1] * g[1, 2] * g[2, 0]).real
    c2 = -(g00 + g11 + g22)
    c1 = g00 * g11 + g00 * g22 + g11 * g22 - a01 - a02 - a12
    c0 = a02 * g11 + a12 * g00 + a01 * g22 - g00 * g11 * g22 - 2.0 * cyc
    return np.array([1.0, c2, c1, c0])


def finite_difference_jacobian(fun, x0: np.ndarray, eps: float = 1e-7) -> np.ndarray:
    f0 = fun(x0)
    jac = np.empty((f0.size, x0.size))
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] += eps
        xm = x0.copy()
        xm[i] -= eps
        jac[:, i] = (fun(xp) - fun(xm)) / (2 * eps)
    return jac


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
