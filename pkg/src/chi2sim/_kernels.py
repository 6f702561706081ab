"""Fused numba kernels for the integrator and the master-equation generator.

Each kernel makes a single pass over its (flattened) operands; with dense
density matrices of a few thousand rows the solver is memory-bound and the
temporaries numpy would create dominate the run time.
"""

import numpy as np
from numba import njit

TILE = 128


@njit(cache=True)
def combine(out, y, h, coeffs, stages):
    """``out = y + h * sum_s coeffs[s] * stages[s]`` on flat arrays."""
    n = y.size
    m = coeffs.size
    for p in range(n):
        acc = 0j
        for s in range(m):
            c = coeffs[s]
            if c != 0.0:
                acc += c * stages[s, p]
        out[p] = y[p] + h * acc


@njit(cache=True)
def error_norm(y, y_new, stages, weights, h, atol, rtol):
    """RMS of the embedded error estimate scaled by ``atol + rtol*max(|y|,|y_new|)``."""
    n = y.size
    m = weights.size
    total = 0.0
    for p in range(n):
        acc = 0j
        for s in range(m):
            w = weights[s]
            if w != 0.0:
                acc += w * stages[s, p]
        a = y[p].real ** 2 + y[p].imag ** 2
        b = y_new[p].real ** 2 + y_new[p].imag ** 2
        scale = atol + rtol * np.sqrt(a if a > b else b)
        total += (acc.real ** 2 + acc.imag ** 2) / (scale * scale)
    return abs(h) * np.sqrt(total / n) if n else 0.0


@njit(cache=True)
def hermitize(rho):
    """In-place ``rho <- (rho + rho^dag) / 2``."""
    n = rho.shape[0]
    for i in range(n):
        rho[i, i] = rho[i, i].real
        for j in range(i + 1, n):
            v = 0.5 * (rho[i, j] + np.conj(rho[j, i]))
            rho[i, j] = v
            rho[j, i] = np.conj(v)


@njit(cache=True)
def lindblad_apply(rho, g_ptr, g_idx, g_val, c_ptr, c_idx, c_val, n_collapse, out):
    """Master-equation generator for a Hermitian ``rho``.

    ``g`` holds ``-i (H - i/2 sum C^dag C)`` in CSR form; the collapse
    operators are stacked row-wise into one CSR matrix of ``n_collapse * n``
    rows.  Computes the upper triangle of

        out = G rho + (G rho)^dag + sum_c C rho C^dag

    tile by tile and mirrors it, using ``conj(rho[k, i]) = rho[i, k]`` so that
    every read runs along a row.
    """
    n = rho.shape[0]
    for i0 in range(0, n, TILE):
        i1 = min(i0 + TILE, n)
        for j0 in range(i0, n, TILE):
            j1 = min(j0 + TILE, n)
            for i in range(i0, i1):
                for j in range(max(i, j0), j1):
                    acc = 0j
                    for q in range(g_ptr[i], g_ptr[i + 1]):
                        acc += g_val[q] * rho[g_idx[q], j]
                    for q in range(g_ptr[j], g_ptr[j + 1]):
                        acc += np.conj(g_val[q]) * rho[i, g_idx[q]]
                    for c in range(n_collapse):
                        ri = c * n + i
                        rj = c * n + j
                        for q in range(c_ptr[ri], c_ptr[ri + 1]):
                            k = c_idx[q]
                            ck = c_val[q]
                            for r in range(c_ptr[rj], c_ptr[rj + 1]):
                                acc += ck * np.conj(c_val[r]) * rho[k, c_idx[r]]
                    out[i, j] = acc
                    if j != i:
                        out[j, i] = np.conj(acc)
