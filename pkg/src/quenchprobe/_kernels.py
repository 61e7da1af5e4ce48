"""Compiled inner loops for matrix-free operator application.

All kernels write into a caller-provided output buffer and touch each output
element exactly once, so results do not depend on evaluation order.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def apply_xx_diag(psi, out, diag, masks, coeffs):
    # out = diag * psi + sum_b coeffs[b] * psi[k ^ masks[b]]
    nb = masks.shape[0]
    for k in range(psi.shape[0]):
        acc = diag[k] * psi[k]
        for b in range(nb):
            acc += coeffs[b] * psi[k ^ masks[b]]
        out[k] = acc


@numba.njit(cache=True)
def apply_sx(psi, out, n_sites):
    for k in range(psi.shape[0]):
        acc = 0j
        for i in range(n_sites):
            acc += psi[k ^ (1 << i)]
        out[k] = 0.5 * acc


def popcounts(n_sites: int) -> np.ndarray:
    """Number of set bits (down spins) of every basis index."""
    pc = np.zeros(1 << n_sites, dtype=np.int64)
    idx = np.arange(1 << n_sites, dtype=np.int64)
    for i in range(n_sites):
        pc += (idx >> i) & 1
    return pc
