"""Independent reference implementations used as test oracles.

Everything here is deliberately written from first principles with none of
the package's shortcuts: B-spline evaluation by the Cox-de Boor recursion,
integrals by adaptive quadrature, metrics by explicit loops, and the nested
low-rank objective minimized by generic alternating least squares over
unconstrained parameters, each block solved with a dense lstsq built from
vec identities. Slow is fine; independent is the point.
"""

import numpy as np
from scipy.integrate import quad


def cox_de_boor(knots, degree, j, x):
    """Value of the j-th B-spline basis function at scalar x, by recursion."""
    knots = np.asarray(knots, dtype=float)
    if x == knots[-1]:
        # clamped right endpoint: only the last basis function is nonzero
        return 1.0 if j == len(knots) - degree - 2 else 0.0

    def b(i, k):
        if k == 0:
            return 1.0 if knots[i] <= x < knots[i + 1] else 0.0
        out = 0.0
        den = knots[i + k] - knots[i]
        if den > 0:
            out += (x - knots[i]) / den * b(i, k - 1)
        den = knots[i + k + 1] - knots[i + 1]
        if den > 0:
            out += (knots[i + k + 1] - x) / den * b(i + 1, k - 1)
        return out

    return b(j, degree)


def basis_matrix(knots, degree, points):
    n_funcs = len(knots) - degree - 1
    return np.array([[cox_de_boor(knots, degree, j, float(x))
                      for j in range(n_funcs)] for x in points])


def integral_against_basis(spec, f, j):
    """High-accuracy quadrature of f(s) * basis_j(s) over the basis domain."""
    val, _ = quad(lambda s: cox_de_boor(spec.knots, spec.degree, j, s) * f(s),
                  spec.domain_lo, spec.domain_hi,
                  points=list(np.unique(spec.knots)), limit=200)
    return val


def naive_mspe(C_hat, X_te, Y_te):
    n = X_te.shape[0]
    total = 0.0
    for i in range(n):
        resid = Y_te[i] - X_te[i] @ C_hat
        total += float(resid @ resid)
    return total / n


def naive_msfpe(y_hat, y_true):
    n = y_hat.shape[0]
    total = 0.0
    for i in range(n):
        for v in range(y_hat.shape[1]):
            diff = y_true[i, v] - y_hat[i, v]
            total += float(diff @ diff)
    return total / n


def naive_rmspe(y_hat, y_true, t_grid):
    n = y_hat.shape[0]
    total = 0.0
    for i in range(n):
        num = den = 0.0
        for v in range(1, len(t_grid)):
            w = t_grid[v] - t_grid[v - 1]
            diff = y_true[i, v] - y_hat[i, v]
            num += float(diff @ diff) * w
            den += float(y_true[i, v] @ y_true[i, v]) * w
        total += num / den
    return total / n


def nested_coef(U, V, A, B, Jx, Jy):
    return np.kron(np.eye(Jx), V) @ B @ A.T @ np.kron(np.eye(Jy), U.T)


def nested_objective(X, Y, U, V, A, B, Jx, Jy):
    return float(np.linalg.norm(Y - X @ nested_coef(U, V, A, B, Jx, Jy)) ** 2)


def bilinear_als_oracle(XL, YL, r, n_restarts=20, n_iter=500, tol=1e-13,
                        seed=0):
    """min ||YL - XL B A'||^2 over (B, A) by plain alternating least squares."""
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(n_restarts):
        A = rng.standard_normal((YL.shape[1], r))
        prev = np.inf
        for _ in range(n_iter):
            B = np.linalg.lstsq(XL, YL @ A @ np.linalg.pinv(A.T @ A),
                                rcond=None)[0]
            W = XL @ B
            A = np.linalg.lstsq(W, YL, rcond=None)[0].T
            obj = float(np.linalg.norm(YL - W @ A.T) ** 2)
            if prev - obj < tol * max(1.0, prev):
                break
            prev = obj
        best = min(best, obj)
    return best


def als_oracle(X, Y, p, d, Jx, Jy, r, rx, ry, n_restarts=200, n_iter=300,
               tol=1e-12, seed=0):
    """Global minimum of the nested low-rank objective by multi-start ALS.

    Optimizes unconstrained (U, V, A, B); the orthonormality constraints do
    not change the attainable set of coefficient matrices. Each block update
    is an exact dense least squares derived from vec(M V N) =
    (N' kron M) vec(V). Returns the best objective found over all restarts.
    """
    rng = np.random.default_rng(seed)
    IJx, IJy = np.eye(Jx), np.eye(Jy)
    y_vec = Y.ravel(order='F')
    best = np.inf
    for _ in range(n_restarts):
        U = rng.standard_normal((d, ry))
        V = rng.standard_normal((p, rx))
        A = rng.standard_normal((Jy * ry, r))
        B = rng.standard_normal((Jx * rx, r))
        prev = np.inf
        for _ in range(n_iter):
            XL = X @ np.kron(IJx, V)
            RA = A.T @ np.kron(IJy, U.T)
            sol = np.linalg.lstsq(np.kron(RA.T, XL), y_vec, rcond=None)[0]
            B = sol.reshape(Jx * rx, r, order='F')

            W = XL @ B                                   # n x r
            RU = np.kron(IJy, U.T)                       # Jy*ry x Jy*d
            sol = np.linalg.lstsq(np.kron(RU.T, W), y_vec, rcond=None)[0]
            A = sol.reshape(r, Jy * ry, order='F').T

            rows = np.vstack([W @ A[j * ry:(j + 1) * ry].T
                              for j in range(Jy)])
            targ = np.vstack([Y[:, j * d:(j + 1) * d] for j in range(Jy)])
            U = np.linalg.lstsq(rows, targ, rcond=None)[0].T

            RA = A.T @ np.kron(IJy, U.T)
            design = sum(np.kron((B[j * rx:(j + 1) * rx] @ RA).T,
                                 X[:, j * p:(j + 1) * p])
                         for j in range(Jx))
            sol = np.linalg.lstsq(design, y_vec, rcond=None)[0]
            V = sol.reshape(p, rx, order='F')

            obj = nested_objective(X, Y, U, V, A, B, Jx, Jy)
            if prev - obj < tol * max(1.0, prev):
                break
            prev = obj
        best = min(best, obj)
    return best
