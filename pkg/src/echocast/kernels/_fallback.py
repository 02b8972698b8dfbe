"""Pure-NumPy reservoir evolution, used when the compiled kernel is absent.

Matches the compiled kernel's semantics: per-row CSR accumulation in
index order, so results agree with the extension to rounding error.
"""

import numpy as np
from scipy import sparse


def run_states(w_data, w_indices, w_indptr, drive, h0, scale, alpha, activation):
    """Evolve the hidden state over all rows of the input drive.

    Same contract as the compiled version: activation 0 = tanh,
    1 = relu, 2 = identity; returns the (T, n_h) state matrix.
    """
    n_steps = drive.shape[0]
    n_h = h0.shape[0]
    w = sparse.csr_matrix((w_data, w_indices, w_indptr), shape=(n_h, n_h))
    out = np.empty((n_steps, n_h), dtype=np.float64)
    h = np.array(h0, dtype=np.float64, copy=True)
    keep = 1.0 - alpha
    for t in range(n_steps):
        pre = scale * (w @ h) + drive[t]
        if activation == 0:
            v = np.tanh(pre)
        elif activation == 1:
            v = np.maximum(pre, 0.0)
        else:
            v = pre
        h = keep * h + alpha * v
        out[t] = h
    return out
