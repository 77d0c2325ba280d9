"""Riemann-sum integration of observed curves against a basis.

Each curve observed at grid points u = 1..g is integrated against every basis
function with the right-endpoint rule

    integral ~= sum_{u=2..g} f(grid[u]) * (grid[u] - grid[u-1]),

i.e. the first grid point contributes only through its spacing. This exact
discretization is deliberate: the benchmark numbers depend on it, so no
trapezoid correction is applied. The integrated response additionally gets
whitened by the inverse square root of the response-basis Gram matrix.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from . import basis as _basis


@dataclass(frozen=True)
class FunctionalSample:
    """One subject's discretely observed curves.

    x_vals has shape (len(x_grid), p); y_vals has shape (len(y_grid), d).
    The response side may be omitted (None) for prediction inputs.
    """

    x_grid: np.ndarray
    x_vals: np.ndarray
    y_grid: np.ndarray = None
    y_vals: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "x_grid", _check_grid(self.x_grid, "x_grid"))
        object.__setattr__(self, "x_vals",
                           _check_vals(self.x_vals, self.x_grid, "x_vals"))
        if (self.y_grid is None) != (self.y_vals is None):
            raise DataError("y_grid and y_vals must be given together")
        if self.y_grid is not None:
            object.__setattr__(self, "y_grid", _check_grid(self.y_grid, "y_grid"))
            object.__setattr__(self, "y_vals",
                               _check_vals(self.y_vals, self.y_grid, "y_vals"))

    @property
    def p(self):
        return self.x_vals.shape[1]

    @property
    def d(self):
        return None if self.y_vals is None else self.y_vals.shape[1]


def _check_grid(grid, name):
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise DataError(f"{name} must be a 1-d grid with at least 2 points")
    steps = np.diff(g)
    if np.any(steps <= 0):
        raise DataError(f"{name} must be strictly increasing")
    return g


def _check_vals(vals, grid, name):
    v = np.asarray(vals, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[0] != grid.size:
        raise DataError(f"{name} must have one row per grid point")
    if not np.all(np.isfinite(v)):
        raise DataError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class IntegratedDesign:
    """Stacked integrated predictors and responses in basis-major block layout.

    X is n x (Jx*p) with column (j, l) holding the integral of predictor l
    against basis function j; Y is n x (Jy*d), whitened on the basis side.
    """

    X: np.ndarray
    Y: np.ndarray
    n: int
    p: int
    d: int
    Jx: int
    Jy: int


def _riemann_block(grid, vals, spec):
    """Right-endpoint Riemann integral of every column of vals against every
    basis function; returns a (J, n_cols) coefficient block."""
    if grid[0] < spec.domain_lo or grid[-1] > spec.domain_hi:
        raise DataError(
            f"grid outside basis domain [{spec.domain_lo}, {spec.domain_hi}]"
        )
    E = _basis.eval_basis(spec, grid)
    w = np.diff(grid)
    return (E[1:] * w[:, None]).T @ vals[1:]


def integrate_x(sample, spec):
    """Integrated predictor vector of length Jx*p, basis-major layout."""
    return _riemann_block(sample.x_grid, sample.x_vals, spec).ravel()


def integrate_y(sample, spec, gram):
    """Integrated, whitened response vector of length Jy*d, basis-major layout.

    Raw Riemann coefficients for each response coordinate are premultiplied
    by the inverse square root of the response Gram matrix.
    """
    if sample.y_grid is None:
        raise DataError("sample has no response curves")
    if gram.J_inv_sqrt.shape[0] != spec.num_funcs:
        raise ConfigError(
            f"gram dimension {gram.J_inv_sqrt.shape[0]} does not match "
            f"basis size {spec.num_funcs}"
        )
    raw = _riemann_block(sample.y_grid, sample.y_vals, spec)
    return (gram.J_inv_sqrt @ raw).ravel()


def assemble_design(samples, x_spec, y_spec, y_gram):
    """Stack per-sample integrals into the design matrices X and Y."""
    samples = list(samples)
    if not samples:
        raise DataError("no samples provided")
    p = samples[0].p
    d = samples[0].d
    if d is None:
        raise DataError("samples must include response curves")
    for i, s in enumerate(samples):
        if s.p != p or s.d != d:
            raise DataError(
                f"sample {i} has (p, d) = ({s.p}, {s.d}), expected ({p}, {d})"
            )
    X = np.stack([integrate_x(s, x_spec) for s in samples])
    Y = np.stack([integrate_y(s, y_spec, y_gram) for s in samples])
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise DataError("integrated design contains non-finite entries")
    return IntegratedDesign(X=X, Y=Y, n=len(samples), p=p, d=d,
                            Jx=x_spec.num_funcs, Jy=y_spec.num_funcs)
