"""Rank selection for the nested estimator and its reduced-rank baselines.

The canonical search is one-at-a-time: first pick the overall rank r with the
variable-level ranks pinned at (p, d), then pick rx and ry one after another
with r fixed, and finally refine r with (rx, ry) fixed. Each incumbent stays
inside the next phase's grid, so the final argmin attains the minimum score
over everything evaluated. Candidates are scored either by BIC on the full
data or by summed held-out error over seeded K folds; candidates whose fits
fail are skipped with a recorded warning.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericalError
from . import estimators as est


@dataclass(frozen=True)
class RankLimits:
    """Optional bounds on the searched rank grids (inclusive)."""

    min_r: int = 1
    max_r: int = None
    min_rx: int = 1
    max_rx: int = None
    min_ry: int = 1
    max_ry: int = None


@dataclass
class RankSearchResult:
    """Scores over the searched triples and the selected one.

    ``search_path`` lists every evaluated (r, rx, ry) in order, phase by
    phase; ``scores`` maps each distinct triple to its score. ``selected``
    attains the minimum recorded score (ties broken toward the smaller
    triple, lexicographically). ``selected_fit`` is the full-data fit of the
    selected triple when the scoring already produced one (BIC path).
    """

    scores: dict
    selected: tuple
    search_path: list
    warnings: list = field(default_factory=list)
    selected_fit: object = None
    chosen_lambda: float = None


def df_hat(r, rx, ry, rank_x, Jx, Jy, d):
    """Effective number of free parameters of the nested model.

    ``rank_x / Jx`` enters as a real number; it need not be an integer for
    rank-deficient designs.
    """
    return rx * (rank_x / Jx - rx) + ry * (d - ry) + (Jy * ry + Jx * rx - r) * r


SSE_FLOOR_REL = 1e-10


def bic(design, fit, df):
    """Bayesian information criterion of a fit on its design.

    SSE must be strictly positive: a fit that interpolates exactly has no
    finite BIC and its candidate must be rejected. SSE below roundoff scale
    (1e-10 of the response energy) is clamped to that floor, so perfect fits
    on noiseless data all share the same log term and the df penalty decides
    between them.
    """
    n_eff = design.n * design.d * design.Jy
    sse = float(fit.sse)
    if not np.isfinite(sse) or sse <= 0.0:
        raise NumericalError(f"BIC undefined: SSE={sse} signals interpolation")
    sse = max(sse, SSE_FLOOR_REL * float(np.linalg.norm(design.Y) ** 2))
    return n_eff * math.log(sse / n_eff) + math.log(n_eff) * df


_FITTERS = {
    "nrrr": est.nrrr_fit,
    "nrrr_x": est.nrrr_x_fit,
    "nrrs": est.nrrs_fit,
}


def _ceil_div(a, b):
    return -(-a // b)


def _grids(design, limits, rank_x, method):
    lim = limits or RankLimits()
    p, d, Jx, Jy = design.p, design.d, design.Jx, design.Jy
    max_r = min(lim.max_r or rank_x, rank_x, Jy * d, Jx * p)
    max_rx = min(lim.max_rx or p, p)
    max_ry = d if method == "nrrr_x" else min(lim.max_ry or d, d)
    min_ry = d if method == "nrrr_x" else max(1, lim.min_ry)
    return {
        "r": (max(1, lim.min_r), max_r),
        "rx": (max(1, lim.min_rx), max_rx),
        "ry": (min_ry, max_ry),
    }


def _run_search(design, limits, method, evaluate, exhaustive=False):
    """One-at-a-time search over (r, rx, ry); ``evaluate`` scores a triple.

    Candidates whose parameter count reaches the number of response entries
    are saturated (they can interpolate arbitrary data) and are left out of
    the grids; this matters when rank(X) equals the sample size.

    ``exhaustive=True`` scores the full 3-d grid instead; only sensible for
    small grids.
    """
    rank_x = est.numerical_rank(design.X)
    bounds = _grids(design, limits, rank_x, method)
    p, d, Jx, Jy = design.p, design.d, design.Jx, design.Jy
    n_eff = design.n * design.d * design.Jy

    scores = {}
    path = []
    warns = []
    cache = {}
    dropped_saturated = False

    def feasible(candidates):
        nonlocal dropped_saturated
        kept = []
        for t in candidates:
            if df_hat(*t, rank_x, Jx, Jy, d) < n_eff:
                kept.append(t)
            else:
                dropped_saturated = True
        return kept

    def score_of(triple):
        if triple not in cache:
            try:
                cache[triple] = evaluate(triple)
            except (ConfigError, NumericalError, np.linalg.LinAlgError) as e:
                cache[triple] = None
                warns.append(f"candidate {triple} skipped: {e}")
        return cache[triple]

    def sweep(candidates):
        best = None
        for triple in candidates:
            path.append(triple)
            val = score_of(triple)
            if val is None:
                continue
            scores[triple] = val
            if best is None or val < scores[best]:
                best = triple
        if best is None:
            raise NumericalError("every rank candidate failed during search")
        return best

    lo_r, hi_r = bounds["r"]
    if lo_r > hi_r:
        raise ConfigError(f"empty rank grid for r: [{lo_r}, {hi_r}]")

    if exhaustive:
        grid = [(r, rx, ry)
                for rx in range(bounds["rx"][0], bounds["rx"][1] + 1)
                for ry in range(bounds["ry"][0], bounds["ry"][1] + 1)
                for r in range(lo_r, min(hi_r, Jx * rx, Jy * ry) + 1)]
        if not grid:
            raise ConfigError("empty exhaustive rank grid")
        sweep(feasible(grid))
        if dropped_saturated:
            warns.append("saturated candidates (df >= n*d*Jy) "
                         "were not searched")
        best_score = min(scores.values())
        selected = min(t for t, v in scores.items() if v == best_score)
        return RankSearchResult(scores=scores, selected=selected,
                                search_path=path, warnings=warns), cache

    r_hat = sweep(feasible([(r, p, d) for r in range(lo_r, hi_r + 1)]))[0]

    lo, hi = bounds["rx"]
    lo = max(lo, _ceil_div(r_hat, Jx))
    if lo > hi:
        raise ConfigError(f"empty rank grid for rx given r={r_hat}")
    rx_hat = sweep(feasible([(r_hat, rx, d)
                             for rx in range(lo, hi + 1)]))[1]

    lo, hi = bounds["ry"]
    lo = max(lo, _ceil_div(r_hat, Jy))
    if lo > hi:
        raise ConfigError(f"empty rank grid for ry given r={r_hat}")
    ry_hat = sweep(feasible([(r_hat, rx_hat, ry)
                             for ry in range(lo, hi + 1)]))[2]

    hi_r_final = min(bounds["r"][1], Jx * rx_hat, Jy * ry_hat)
    final = sweep(feasible([(r, rx_hat, ry_hat)
                            for r in range(lo_r, hi_r_final + 1)]))

    if dropped_saturated:
        warns.append("saturated candidates (df >= n*d*Jy) were not searched")
    best_score = min(scores.values())
    selected = min(t for t, v in scores.items() if v == best_score)
    if scores[final] > best_score:
        # with nested phase grids this cannot happen; guard regardless
        warns.append(f"final phase argmin {final} beaten by {selected}")
    return RankSearchResult(scores=scores, selected=selected,
                            search_path=path, warnings=warns), cache


def select_ranks_bic(design, limits=None, method="nrrr", tol=1e-4,
                     max_iter=100, lambdas=None, restarts=0, seed=None,
                     exhaustive=False):
    """Select (r, rx, ry) by BIC with the one-at-a-time search.

    Parameters
    ----------
    design : IntegratedDesign
    limits : RankLimits, optional
        Bounds on the searched grids; defaults to the full feasible ranges.
    method : {'nrrr', 'nrrr_x', 'nrrs'}
        Estimator fitted at every candidate. 'nrrr_x' pins ry = d; 'nrrs'
        additionally tunes its ridge penalty inside each candidate over
        ``lambdas``.
    lambdas : sequence of float, optional
        Ridge grid for method='nrrs'; default 10**(-4..2).
    exhaustive : bool, default=False
        Score the full 3-d grid instead of the one-at-a-time phases; only
        sensible for small grids.
    """
    if method not in _FITTERS:
        raise ConfigError(f"unknown method {method!r}")
    fitter = _FITTERS[method]
    if method == "nrrs" and lambdas is None:
        lambdas = np.logspace(-4, 2, 7)
    rank_x = est.numerical_rank(design.X)
    fits = {}

    def evaluate(triple):
        r, rx, ry = triple
        df = df_hat(r, rx, ry, rank_x, design.Jx, design.Jy, design.d)
        if method == "nrrs":
            best = None
            for lam in lambdas:
                cfg = est.NrrrConfig(r=r, rx=rx, ry=ry, tol=tol,
                                     max_iter=max_iter, ridge_lambda=lam)
                fit = fitter(design, cfg, restarts=restarts, seed=seed)
                val = bic(design, fit, df)
                if best is None or val < best[0]:
                    best = (val, fit, lam)
            fits[triple] = best[1:]
            return best[0]
        cfg = est.NrrrConfig(r=r, rx=rx, ry=ry, tol=tol, max_iter=max_iter)
        fit = fitter(design, cfg, restarts=restarts, seed=seed)
        fits[triple] = (fit, None)
        return bic(design, fit, df)

    result, _ = _run_search(design, limits, method, evaluate,
                            exhaustive=exhaustive)
    sel_fit, sel_lam = fits.get(result.selected, (None, None))
    result.selected_fit = sel_fit
    result.chosen_lambda = sel_lam
    return result


def _make_folds(n, K, seed):
    rng = np.random.default_rng(seed)
    return np.array_split(rng.permutation(n), K)


def _subdesign(design, idx):
    return replace(design, X=design.X[idx], Y=design.Y[idx], n=len(idx))


def select_ranks_cv(design, limits=None, K=10, seed=None, method="nrrr",
                    tol=1e-4, max_iter=100, lambdas=None, restarts=0,
                    exhaustive=False):
    """Select (r, rx, ry) by K-fold cross validation.

    Folds are a seeded random partition shared by every candidate; the score
    is the summed held-out squared error across folds, so unequal fold sizes
    weight by sample count. The search structure matches the BIC selector.
    """
    if K < 2:
        raise ConfigError(f"K must be >= 2, got {K}")
    if design.n < K:
        raise ConfigError(f"need at least K={K} samples, got {design.n}")
    if method not in _FITTERS:
        raise ConfigError(f"unknown method {method!r}")
    fitter = _FITTERS[method]
    if method == "nrrs" and lambdas is None:
        lambdas = np.logspace(-4, 2, 7)
    folds = _make_folds(design.n, K, seed)
    all_idx = np.arange(design.n)
    splits = [(np.setdiff1d(all_idx, va, assume_unique=True), va)
              for va in folds]

    score_floor = SSE_FLOOR_REL * float(np.linalg.norm(design.Y) ** 2)

    def holdout_error(triple, lam):
        r, rx, ry = triple
        cfg = est.NrrrConfig(r=r, rx=rx, ry=ry, tol=tol, max_iter=max_iter,
                             ridge_lambda=lam)
        total = 0.0
        for tr, va in splits:
            fit = fitter(_subdesign(design, tr), cfg,
                         restarts=restarts, seed=seed)
            resid = design.Y[va] - design.X[va] @ fit.C
            total += float(np.linalg.norm(resid) ** 2)
        # clamp roundoff-scale errors so perfect fits tie and the first
        # (smallest-rank) candidate wins
        return max(total, score_floor)

    chosen_lams = {}

    def evaluate(triple):
        if method == "nrrs":
            best = None
            for lam in lambdas:
                val = holdout_error(triple, lam)
                if best is None or val < best[0]:
                    best = (val, lam)
            chosen_lams[triple] = best[1]
            return best[0]
        return holdout_error(triple, 0.0)

    result, _ = _run_search(design, limits, method, evaluate,
                            exhaustive=exhaustive)
    result.chosen_lambda = chosen_lams.get(result.selected)
    return result


def _rrr_fold_errors(X_tr, Y_tr, X_va, Y_va, max_r):
    """Held-out squared error of rank-1..max_r RRR fits, sharing one SVD."""
    A_full, F, base = _rrr_regression_parts(X_tr, Y_tr)
    H = X_va @ F
    P = H @ A_full
    Yw = Y_va @ A_full
    cross = np.cumsum(np.sum(P * Yw, axis=0))
    power = np.cumsum(np.sum(P * P, axis=0))
    errs = np.full(max_r, float(np.linalg.norm(Y_va) ** 2))
    k = min(max_r, A_full.shape[1])
    if k > 0:
        errs[:k] += -2.0 * cross[:k] + power[:k]
        errs[k:] = errs[k - 1]
    return errs


def _rrr_regression_parts(X, Y):
    Ux, s, Vxt = np.linalg.svd(X, full_matrices=False)
    keep = s > est.PINV_RCOND * s[0] if s.size and s[0] > 0 else np.zeros_like(s, bool)
    Uk = Ux[:, keep]
    proj = Uk.T @ Y
    F = Vxt[keep].T @ (proj / s[keep, None])
    G = Uk @ proj
    A_full = np.linalg.svd(G, full_matrices=False)[2].T
    return A_full, F, G


def select_rank_rrr_cv(design, K=10, seed=None, max_r=None, lam=0.0):
    """Pick the rank of a (possibly ridge-penalized) reduced-rank regression
    by K-fold CV. Returns a RankSearchResult keyed by (r, p, d)."""
    if K < 2 or design.n < K:
        raise ConfigError(f"invalid fold count K={K} for n={design.n}")
    q = design.Jy * design.d
    cap = min(est.numerical_rank(design.X), q)
    max_r = min(max_r or cap, cap)
    if max_r < 1:
        raise ConfigError("design has rank 0; nothing to select")
    folds = _make_folds(design.n, K, seed)
    all_idx = np.arange(design.n)
    total = np.zeros(max_r)
    for va in folds:
        tr = np.setdiff1d(all_idx, va, assume_unique=True)
        X_tr, Y_tr = est._augment(design.X[tr], design.Y[tr], lam)
        total += _rrr_fold_errors(X_tr, Y_tr, design.X[va], design.Y[va], max_r)
    best_r = int(np.argmin(total)) + 1
    scores = {(r + 1, design.p, design.d): float(total[r]) for r in range(max_r)}
    return RankSearchResult(
        scores=scores,
        selected=(best_r, design.p, design.d),
        search_path=[(r + 1, design.p, design.d) for r in range(max_r)],
        chosen_lambda=lam if lam > 0 else None,
    )


def select_rrs_cv(design, lambdas=None, K=10, seed=None, max_r=None):
    """Joint CV over (rank, ridge penalty) for reduced-rank ridge regression."""
    if lambdas is None:
        lambdas = np.logspace(-4, 2, 7)
    best = None
    for lam in lambdas:
        res = select_rank_rrr_cv(design, K=K, seed=seed, max_r=max_r, lam=lam)
        val = res.scores[res.selected]
        if best is None or val < best[0]:
            best = (val, res.selected[0], float(lam))
    _, r_hat, lam_hat = best
    return r_hat, lam_hat
