"""B-spline bases: construction, evaluation, Gram matrices and matrix roots.

Bases are clamped B-splines with uniformly spaced interior knots. Gram
matrices are computed by composite Gauss-Legendre quadrature per knot span,
which is exact (up to roundoff) for the piecewise-polynomial integrands, and
their symmetric inverse square roots come from an eigendecomposition.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigError, DataError, NumericalError

_EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    """A clamped B-spline basis on [domain_lo, domain_hi].

    ``knots`` is the full knot vector of length num_funcs + degree + 1 with
    (degree + 1)-fold boundary knots.
    """

    domain_lo: float
    domain_hi: float
    degree: int
    num_funcs: int
    knots: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class GramMatrix:
    """Gram matrix of a basis together with its symmetric inverse square root."""

    J: np.ndarray
    J_inv_sqrt: np.ndarray


def make_bspline(domain_lo, domain_hi, num_funcs, degree=3):
    """Build a clamped B-spline basis with uniform interior knots.

    Parameters
    ----------
    domain_lo, domain_hi : float
        Interval endpoints, domain_lo < domain_hi.
    num_funcs : int
        Number of basis functions; must be at least degree + 1.
    degree : int, default=3
        Polynomial degree of the spline pieces (3 = cubic).
    """
    if degree < 0:
        raise ConfigError(f"degree must be nonnegative, got {degree}")
    if num_funcs < degree + 1:
        raise ConfigError(
            f"num_funcs must be >= degree + 1 ({degree + 1}), got {num_funcs}"
        )
    if not domain_lo < domain_hi:
        raise ConfigError(
            f"domain_lo must be < domain_hi, got [{domain_lo}, {domain_hi}]"
        )
    n_interior = num_funcs - degree - 1
    interior = np.linspace(domain_lo, domain_hi, n_interior + 2)[1:-1]
    knots = np.concatenate([
        np.full(degree + 1, float(domain_lo)),
        interior,
        np.full(degree + 1, float(domain_hi)),
    ])
    knots.flags.writeable = False
    return BasisSpec(float(domain_lo), float(domain_hi), int(degree),
                     int(num_funcs), knots)


def eval_basis(spec, points):
    """Evaluate all basis functions at ``points``; returns an (m, J) matrix.

    Every point must lie inside the basis domain. Rows sum to one (partition
    of unity) and all entries are in [0, 1].
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    if pts.ndim != 1:
        raise DataError("points must be one-dimensional")
    if pts.size and (pts.min() < spec.domain_lo or pts.max() > spec.domain_hi):
        raise DataError(
            f"points outside basis domain [{spec.domain_lo}, {spec.domain_hi}]"
        )
    dm = BSpline.design_matrix(pts, spec.knots, spec.degree, extrapolate=False)
    return dm.toarray()


def _span_breaks(spec):
    return np.unique(spec.knots)


def gram(spec, quad_points=None):
    """Gram matrix of the basis and its symmetric inverse square root.

    Uses composite Gauss-Legendre quadrature with ``quad_points`` nodes per
    knot span (default degree + 1, enough for exactness on products of two
    basis functions).
    """
    min_nodes = spec.degree + 1
    if quad_points is None:
        quad_points = min_nodes
    if quad_points < min_nodes:
        raise ConfigError(
            f"quad_points must be >= degree + 1 ({min_nodes}) for an exact "
            f"Gram matrix, got {quad_points}"
        )
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    breaks = _span_breaks(spec)
    J = np.zeros((spec.num_funcs, spec.num_funcs))
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (hi - lo)
        x = lo + half * (nodes + 1.0)
        E = eval_basis(spec, x)
        A = np.sqrt(half * weights)[:, None] * E
        J += A.T @ A
    J = 0.5 * (J + J.T)
    return GramMatrix(J=J, J_inv_sqrt=inv_sqrt(J))


def inv_sqrt(M):
    """Symmetric inverse square root of a symmetric positive definite matrix."""
    return _sym_power(M, -0.5)


def sym_sqrt(M):
    """Symmetric square root of a symmetric positive definite matrix."""
    return _sym_power(M, 0.5)


def _sym_power(M, power):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError("matrix must be square")
    asym = np.linalg.norm(M - M.T)
    if asym > 1e-10 * max(1.0, np.linalg.norm(M)):
        raise ConfigError(f"matrix is not symmetric (asymmetry {asym:.3e})")
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    if vals.min() <= _EIG_FLOOR:
        raise NumericalError(
            f"matrix not positive definite (min eigenvalue {vals.min():.3e})"
        )
    S = (vecs * vals ** power) @ vecs.T
    return 0.5 * (S + S.T)
