"""Pure NumPy/SciPy fallback for the aggregation kernel."""

import numpy as np
import scipy.sparse as sp


def csr_residual_aggregate(indptr, indices, coef, other, base, out):
    """out[r] = base[r] + sum_{e in row r} coef[e] * other[indices[e]].

    `indptr`/`indices`/`coef` describe one direction of the bipartite
    adjacency in CSR form; `other` holds the opposite side's rows.
    Rows with no edges copy `base` through unchanged.
    """
    n_rows = indptr.shape[0] - 1
    mat = sp.csr_matrix((coef, indices, indptr), shape=(n_rows, other.shape[0]))
    np.copyto(out, base)
    out += mat @ other
