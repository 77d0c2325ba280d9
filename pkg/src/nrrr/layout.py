"""Row/entry rearrangements between the two block orderings used throughout.

Integrated vectors and factor matrices appear in two layouts:

* variable-major: entries grouped per variable, i.e. index (h, j) flattens to
  h * n_basis + j for variable h and basis function j.
* basis-major: entries grouped per basis function, i.e. index (j, h) flattens
  to j * n_vars + h. Design matrices X, Y and the factor matrices consumed by
  the fitting updates use this ordering.

These permutations are the most error-prone part of the whole pipeline, so
they live here as two tiny functions with round-trip tests.
"""

import numpy as np


def to_basis_major(arr, n_vars, n_basis):
    """Reorder rows (or entries of a vector) from variable-major to basis-major.

    ``arr`` has n_vars * n_basis rows; row (h, j) moves to position (j, h).
    """
    a = np.asarray(arr)
    if a.shape[0] != n_vars * n_basis:
        raise ValueError(
            f"expected {n_vars * n_basis} rows, got {a.shape[0]}"
        )
    rest = a.shape[1:]
    return a.reshape(n_vars, n_basis, *rest).swapaxes(0, 1).reshape(a.shape)


def to_variable_major(arr, n_vars, n_basis):
    """Inverse of :func:`to_basis_major`."""
    a = np.asarray(arr)
    if a.shape[0] != n_vars * n_basis:
        raise ValueError(
            f"expected {n_vars * n_basis} rows, got {a.shape[0]}"
        )
    rest = a.shape[1:]
    return a.reshape(n_basis, n_vars, *rest).swapaxes(0, 1).reshape(a.shape)
