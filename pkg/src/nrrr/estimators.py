"""Estimators for the integrated regression problem.

Given design matrices X (n x Jx*p) and Y (n x Jy*d) in basis-major block
layout, this module fits

* OLS and classical reduced-rank regression (RRR), plus a ridge variant (RRS)
  via row augmentation;
* the nested reduced-rank estimator: C = (I_Jx kron V) B A' (I_Jy kron U')
  with orthonormal U (d x ry) and V (p x rx) and rank(B A') <= r, fitted by
  blockwise coordinate descent. Each sweep performs a reduced-rank update of
  (A, B), an orthogonal-Procrustes update of U, and a joint least-squares /
  QR update of (V, B). Every step decreases the squared-error objective, so
  the recorded objective trace is nonincreasing.

The factor matrices A and B are stored in basis-major row layout (blocks of
ry resp. rx rows per basis function), matching the column layout of Y and X.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import ConfigError, DataError, NumericsWarning
from .integrate import integrate_x
from .basis import eval_basis
from .layout import to_variable_major

PINV_RCOND = 1e-10


@dataclass(frozen=True)
class NrrrConfig:
    """Rank triple and iteration controls for the nested estimator."""

    r: int
    rx: int
    ry: int
    max_iter: int = 100
    tol: float = 1e-4
    ridge_lambda: float = 0.0


@dataclass(frozen=True)
class NrrrFit:
    """Fitted nested reduced-rank model.

    C is assembled as (I_Jx kron V) B A' (I_Jy kron U'); sse is the squared
    Frobenius residual of C on the (unaugmented) design. objective_trace holds
    the per-sweep objective (penalized when ridge_lambda > 0).
    """

    U: np.ndarray
    V: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    sse: float
    objective_trace: np.ndarray
    converged: bool
    iters: int

    @property
    def ranks(self):
        return (self.A.shape[1], self.V.shape[1], self.U.shape[1])


@dataclass(frozen=True)
class RrrFit:
    """Reduced-rank regression fit with C = B A'."""

    C: np.ndarray
    A: np.ndarray
    B: np.ndarray
    sse: float
    r: int


def _fix_signs(M):
    """Flip column signs so each column's largest-magnitude entry is positive."""
    if M.size == 0:
        return M
    idx = np.argmax(np.abs(M), axis=0)
    signs = np.sign(M[idx, np.arange(M.shape[1])])
    signs[signs == 0] = 1.0
    return M * signs


def numerical_rank(X, rcond=PINV_RCOND):
    """Rank of X counting singular values above rcond * sigma_max."""
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rcond * s[0]))


def _top_right_singvecs(G, r, rcond=PINV_RCOND):
    """Top-r right singular vectors of G and the discarded squared tail.

    Works on the Gram matrix of the smaller side, so the cost is driven by
    min(G.shape). If G has fewer than r usable singular directions, the
    remaining columns are completed to an orthonormal set deterministically
    (any such completion leaves the objective unchanged).
    """
    n, q = G.shape
    wide = n < q
    lam, W = np.linalg.eigh(G @ G.T if wide else G.T @ G)
    lam = np.clip(lam[::-1], 0.0, None)
    W = W[:, ::-1]
    total = float(lam.sum())
    cutoff = (rcond ** 2) * lam[0] if lam.size else 0.0
    k = min(r, int(np.sum(lam > cutoff)))
    if wide:
        V = G.T @ (W[:, :k] / np.sqrt(lam[:k]))
    else:
        V = W[:, :k]
    V = _fix_signs(V)
    if k < r:
        full, _ = np.linalg.qr(np.hstack([V, np.eye(q)]))
        V = np.hstack([V, full[:, k:r]])
    tail = max(total - float(lam[:r].sum()), 0.0)
    return V, tail


def _rrr_core(X, Y, r, rcond=PINV_RCOND):
    """Rank-r least squares of Y on X.

    Returns (A, B, sse, rank_x) with A the top-r right singular vectors of
    the projected fit and B = pinv(X) Y A.
    """
    Ux, s, Vxt = np.linalg.svd(X, full_matrices=False)
    if s.size and s[0] > 0:
        keep = s > rcond * s[0]
    else:
        keep = np.zeros(s.shape, dtype=bool)
    rank_x = int(keep.sum())
    Uk = Ux[:, keep]
    proj_coef = Uk.T @ Y
    F = Vxt[keep].T @ (proj_coef / s[keep, None])   # pinv(X) @ Y
    G = Uk @ proj_coef                              # projection of Y onto col(X)
    A, tail = _top_right_singvecs(G, r, rcond)
    B = F @ A
    sse = float(np.linalg.norm(Y - G) ** 2 + tail)
    return A, B, sse, rank_x


def _expand_cols(M, T, n_blocks):
    """Right-multiply each of n_blocks column blocks of M by T (k x m)."""
    n = M.shape[0]
    k = T.shape[0]
    return np.ascontiguousarray(
        (M.reshape(n, n_blocks, k) @ T).reshape(n, n_blocks * T.shape[1])
    )


def assemble_coef(U, V, A, B, Jx, Jy):
    """Assemble C = (I_Jx kron V) B A' (I_Jy kron U')."""
    p, rx = V.shape
    d, ry = U.shape
    core = B @ A.T                                        # (Jx rx) x (Jy ry)
    left = (V @ core.reshape(Jx, rx, -1)).reshape(Jx * p, Jy, ry)
    return (left.reshape(-1, ry) @ U.T).reshape(Jx * p, Jy * d)


def sse_of(design, C):
    """Squared Frobenius residual of coefficient matrix C on a design."""
    return float(np.linalg.norm(design.Y - design.X @ C) ** 2)


def ols_fit(design):
    """Least squares coefficient matrix via the Moore-Penrose pseudo-inverse."""
    C, *_ = np.linalg.lstsq(design.X, design.Y, rcond=PINV_RCOND)
    return C


def rrr_fit(design, r):
    """Classical reduced-rank regression with rank(C) <= r."""
    q = design.Jy * design.d
    rank_x = numerical_rank(design.X)
    if not 1 <= r <= min(rank_x, q):
        raise ConfigError(
            f"rank r={r} outside [1, min(rank(X)={rank_x}, Jy*d={q})]"
        )
    A, B, sse, _ = _rrr_core(design.X, design.Y, r)
    return RrrFit(C=B @ A.T, A=A, B=B, sse=sse, r=r)


def _augment(X, Y, lam):
    if lam == 0.0:
        return X, Y
    k = X.shape[1]
    Xa = np.vstack([X, np.sqrt(lam) * np.eye(k)])
    Ya = np.vstack([Y, np.zeros((k, Y.shape[1]))])
    return Xa, Ya


def rrs_fit(design, r, lam):
    """Reduced-rank ridge regression.

    Solves min ||Y - XC||_F^2 + lam ||C||_F^2 subject to rank(C) <= r via
    row augmentation of (X, Y).
    """
    if lam < 0:
        raise ConfigError(f"ridge penalty must be nonnegative, got {lam}")
    if lam == 0.0:
        return rrr_fit(design, r)
    q = design.Jy * design.d
    Xa, Ya = _augment(design.X, design.Y, lam)
    rank_xa = numerical_rank(Xa)
    if not 1 <= r <= min(rank_xa, q):
        raise ConfigError(f"rank r={r} outside [1, {min(rank_xa, q)}]")
    A, B, _, _ = _rrr_core(Xa, Ya, r)
    C = B @ A.T
    return RrrFit(C=C, A=A, B=B, sse=sse_of(design, C), r=r)


def _complete_orthonormal(Q, k):
    """Extend orthonormal columns Q to k columns, deterministically."""
    if Q.shape[1] >= k:
        return Q[:, :k]
    full, _ = np.linalg.qr(np.hstack([Q, np.eye(Q.shape[0])]))
    return full[:, :k]


def nrrr_init(design, config):
    """Initial (U0, V0) from the rank-r RRR fit.

    The RRR factors are cut into per-basis blocks; V0 / U0 are the leading
    left singular vectors of the horizontally stacked blocks.
    """
    fit = rrr_fit(design, config.r)
    V0 = _stacked_block_singvecs(fit.B, design.Jx, design.p, config.rx)
    U0 = _stacked_block_singvecs(fit.A, design.Jy, design.d, config.ry)
    return U0, V0


def _stacked_block_singvecs(M, n_blocks, block_rows, k):
    stacked = M.reshape(n_blocks, block_rows, -1)
    stacked = stacked.transpose(1, 0, 2).reshape(block_rows, -1)
    Um = np.linalg.svd(stacked, full_matrices=False)[0]
    return _complete_orthonormal(_fix_signs(Um), k)


def update_ab(design, U, V, r):
    """Reduced-rank update of (A, B) for fixed orthonormal (U, V)."""
    X_L = _expand_cols(design.X, V, design.Jx)
    Y_L = _expand_cols(design.Y, U, design.Jy)
    A, B, _, _ = _rrr_core(X_L, Y_L, r)
    return A, B


def update_u(design, V, A, B):
    """Orthogonal Procrustes update of U for fixed (V, A, B)."""
    d, Jy = design.d, design.Jy
    ry, r = A.shape[0] // Jy, A.shape[1]
    T = _expand_cols(design.X, V, design.Jx) @ B          # n x r
    A3 = A.reshape(Jy, ry, r)
    W = np.einsum('ir,jhr->ijh', T, A3)                   # n x Jy x ry
    M = np.einsum('ijk,ijh->kh', design.Y.reshape(-1, Jy, d), W)
    Um, _, Vmt = np.linalg.svd(M, full_matrices=False)
    return Um @ Vmt


def update_bv(design, U, A, B, _xtx=None):
    """One-step joint update of (V, B) for fixed (U, A).

    Solves the unconstrained least squares in vec(V), then restores the
    orthonormality of V by a QR factorization, folding the triangular factor
    into the blocks of B; the assembled coefficient matrix is unchanged by
    the refactorization, so the objective cannot increase.

    A must have orthonormal columns (as produced by :func:`update_ab`);
    otherwise the least-squares subproblem is not equivalent to the full
    objective and the descent guarantee is lost.
    """
    Jx, p = design.Jx, design.p
    rx, r = B.shape[0] // Jx, B.shape[1]
    M = _expand_cols(design.Y, U, design.Jy) @ A          # n x r
    xtx = design.X.T @ design.X if _xtx is None else _xtx
    B3 = B.reshape(Jx, rx, r)
    G4 = xtx.reshape(Jx, p, Jx, p)

    # normal equations sum_{j,j'} (B_j B_j'^T) kron (X_j^T X_j') without
    # materializing the Kronecker factors one by one
    BB = np.einsum('jar,kbr->jkab', B3, B3)
    N = np.einsum('jkab,jlkm->albm', BB, G4, optimize=True)
    N = N.reshape(rx * p, rx * p)
    rhs = np.zeros((p, rx))
    Xr = design.X.reshape(-1, Jx, p)
    for j in range(Jx):
        rhs += (Xr[:, j, :].T @ M) @ B3[j].T
    rhs = rhs.ravel(order='F')

    try:
        sol = cho_solve(cho_factor(N, check_finite=False), rhs,
                        check_finite=False)
    except LinAlgError:
        warnings.warn("singular normal equations in (V, B) update; "
                      "falling back to pseudo-inverse", NumericsWarning)
        sol = np.linalg.lstsq(N, rhs, rcond=PINV_RCOND)[0]

    V_tilde = sol.reshape(rx, p).T
    Q, R = np.linalg.qr(V_tilde)
    B_new = (R[None, :, :] @ B3).reshape(Jx * rx, r)
    return Q, B_new


def _validate_config(design, config):
    c = config
    for name, val in (("r", c.r), ("rx", c.rx), ("ry", c.ry)):
        if not isinstance(val, (int, np.integer)) or val < 1:
            raise ConfigError(f"rank {name} must be a positive integer, got {val}")
    if c.rx > design.p:
        raise ConfigError(f"rx={c.rx} exceeds number of predictors p={design.p}")
    if c.ry > design.d:
        raise ConfigError(f"ry={c.ry} exceeds number of responses d={design.d}")
    cap = min(design.Jy * c.ry, design.Jx * c.rx)
    if c.r > cap:
        raise ConfigError(f"r={c.r} exceeds min(Jy*ry, Jx*rx)={cap}")
    if c.tol <= 0:
        raise ConfigError(f"tol must be positive, got {c.tol}")
    if c.max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {c.max_iter}")
    if c.ridge_lambda < 0:
        raise ConfigError(f"ridge_lambda must be >= 0, got {c.ridge_lambda}")


@dataclass(frozen=True)
class _WorkDesign:
    X: np.ndarray
    Y: np.ndarray
    n: int
    p: int
    d: int
    Jx: int
    Jy: int


def _descent_loop(work, config, U0, V0, fix_u):
    U, V = U0, V0
    xtx = work.X.T @ work.X
    trace = []
    C_prev = None
    converged = False
    iters = 0
    A = B = C = None
    for iters in range(1, config.max_iter + 1):
        A, B = update_ab(work, U, V, config.r)
        if not fix_u:
            U = update_u(work, V, A, B)
        V, B = update_bv(work, U, A, B, _xtx=xtx)
        C = assemble_coef(U, V, A, B, work.Jx, work.Jy)
        trace.append(sse_of(work, C))
        if C_prev is not None:
            denom = np.linalg.norm(C_prev)
            delta = np.linalg.norm(C - C_prev)
            rel = delta / denom if denom > 0 else delta
            if rel <= config.tol:
                converged = True
                break
        C_prev = C
    return U, V, A, B, C, np.asarray(trace), converged, iters


def _fit_nested(design, config, restarts, seed, fix_u):
    _validate_config(design, config)
    if fix_u and config.ry != design.d:
        config = replace(config, ry=design.d)
    lam = config.ridge_lambda
    Xa, Ya = _augment(design.X, design.Y, lam)
    work = _WorkDesign(X=Xa, Y=Ya, n=Xa.shape[0], p=design.p, d=design.d,
                       Jx=design.Jx, Jy=design.Jy)

    starts = []
    U0, V0 = nrrr_init(work, config)
    if fix_u:
        U0 = np.eye(design.d)
    starts.append((U0, V0))
    if restarts:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            Ur = np.linalg.qr(rng.standard_normal((design.d, config.ry)))[0]
            Vr = np.linalg.qr(rng.standard_normal((design.p, config.rx)))[0]
            starts.append((np.eye(design.d) if fix_u else Ur, Vr))

    best = None
    for Us, Vs in starts:
        out = _descent_loop(work, config, Us, Vs, fix_u)
        if best is None or out[5][-1] < best[5][-1]:
            best = out
    U, V, A, B, C, trace, converged, iters = best
    return NrrrFit(U=U, V=V, A=A, B=B, C=C, sse=sse_of(design, C),
                   objective_trace=trace, converged=converged, iters=iters)


def nrrr_fit(design, config, restarts=0, seed=None):
    """Fit the nested reduced-rank model by blockwise coordinate descent.

    Parameters
    ----------
    design : IntegratedDesign
        Integrated data in basis-major block layout.
    config : NrrrConfig
        Rank triple (r, rx, ry), iteration cap, relative-change tolerance and
        optional ridge penalty (ridge_lambda > 0 row-augments the problem).
    restarts : int, default=0
        Extra runs from random orthonormal (U, V) starts in addition to the
        deterministic initializer; the best final objective wins.
    seed : int, optional
        Seed for the restart draws.

    Returns
    -------
    NrrrFit
        Non-convergence within max_iter is reported via ``converged``, not
        raised.
    """
    return _fit_nested(design, config, restarts, seed, fix_u=False)


def nrrs_fit(design, config, restarts=0, seed=None):
    """Ridge-penalized nested fit; requires config.ridge_lambda > 0."""
    if config.ridge_lambda <= 0:
        raise ConfigError("nrrs_fit requires ridge_lambda > 0; use nrrr_fit")
    return _fit_nested(design, config, restarts, seed, fix_u=False)


def nrrr_x_fit(design, config, restarts=0, seed=None):
    """Nested fit with the response side unreduced: ry = d and U = I_d."""
    return _fit_nested(design, config, restarts, seed, fix_u=True)


def _unwhitened_factors(fit, y_spec, y_gram, x_spec):
    """Recover the variable-major factor matrices of the latent surface.

    Undoes the basis-major row rearrangement of A and B and removes the Gram
    whitening from the response side.
    """
    ry, rx = fit.U.shape[1], fit.V.shape[1]
    Jx, Jy = x_spec.num_funcs, y_spec.num_funcs
    r = fit.A.shape[1]
    if fit.A.shape[0] != Jy * ry or fit.B.shape[0] != Jx * rx:
        raise DataError("fit factors do not match the supplied basis sizes")
    A_vm = to_variable_major(fit.A, ry, Jy).reshape(ry, Jy, r)
    A_star = np.einsum('jk,hkr->hjr', y_gram.J_inv_sqrt, A_vm)
    B_star = to_variable_major(fit.B, rx, Jx).reshape(rx, Jx, r)
    return A_star, B_star


def coef_surface(fit, x_spec, y_spec, y_gram, s_grid, t_grid):
    """Evaluate the fitted coefficient surfaces on a grid.

    Returns an array of shape (d, p, len(s_grid), len(t_grid)) whose entry
    [k, l, i, j] is the weight of predictor l at s_grid[i] in the prediction
    of response k at t_grid[j].
    """
    A_star, B_star = _unwhitened_factors(fit, y_spec, y_gram, x_spec)
    Phi = eval_basis(x_spec, s_grid)
    Psi = eval_basis(y_spec, t_grid)
    TA = np.einsum('tj,hjr->thr', Psi, A_star)
    SB = np.einsum('sj,gjr->sgr', Phi, B_star)
    return np.einsum('kh,thr,sgr,lg->klst', fit.U, TA, SB, fit.V)


def predict(fit, new_samples, x_spec, y_spec, y_gram, t_grid):
    """Predicted response curves for new samples, shape (n, len(t_grid), d).

    Integrates the predictor curves, applies the fitted coefficient matrix,
    and reconstructs curves through the response basis after removing the
    Gram whitening.
    """
    new_samples = list(new_samples)
    if not new_samples:
        raise DataError("no samples to predict")
    Xn = np.stack([integrate_x(s, x_spec) for s in new_samples])
    if Xn.shape[1] != fit.C.shape[0]:
        raise DataError(
            f"integrated predictors have {Xn.shape[1]} columns; fit expects "
            f"{fit.C.shape[0]}"
        )
    d, Jy = fit.U.shape[0], y_spec.num_funcs
    rows = Xn @ fit.C
    coefs = rows.reshape(-1, Jy, d).transpose(0, 2, 1)    # (n, d, Jy)
    Psi = eval_basis(y_spec, t_grid)
    return np.einsum('mj,jk,nlk->nml', Psi, y_gram.J_inv_sqrt, coefs)
