import numpy as np
import numpy.testing as npt
import pytest

from nrrr.basis import make_bspline, gram, eval_basis
from nrrr.errors import ConfigError, DataError
from nrrr.integrate import (FunctionalSample, integrate_x, integrate_y,
                            assemble_design)

from oracles import integral_against_basis


def _sample_x(grid, vals):
    return FunctionalSample(np.asarray(grid, float), np.asarray(vals, float))


def test_sample_validation():
    with pytest.raises(DataError):
        FunctionalSample(np.array([0.0, 0.0, 1.0]), np.zeros((3, 1)))
    with pytest.raises(DataError):
        FunctionalSample(np.array([0.0, -1.0]), np.zeros((2, 1)))
    with pytest.raises(DataError):
        FunctionalSample(np.array([0.5]), np.zeros((1, 1)))
    with pytest.raises(DataError):
        FunctionalSample(np.array([0.0, 1.0]), np.array([[0.0], [np.nan]]))
    with pytest.raises(DataError):
        FunctionalSample(np.array([0.0, 1.0]), np.zeros((2, 1)),
                         np.array([0.0, 1.0]), None)


def test_integrate_x_zero_curve():
    spec = make_bspline(0, 1, 8, 3)
    s = _sample_x(np.linspace(0, 1, 50), np.zeros((50, 3)))
    npt.assert_array_equal(integrate_x(s, spec), np.zeros(24))


def test_integrate_x_constant_telescopes():
    # degree-0 single basis function: sum_{u>=2} c * (s_u - s_{u-1})
    spec = make_bspline(0, 1, 1, 0)
    grid = np.array([0.2, 0.3, 0.55, 0.8, 1.0])
    c = 2.5
    s = _sample_x(grid, np.full((5, 1), c))
    npt.assert_allclose(integrate_x(s, spec), [c * (1.0 - 0.2)], rtol=1e-15)


def test_integrate_x_matches_literal_sum():
    # entry (j, l) must equal the literal right-endpoint sum
    spec = make_bspline(0, 1, 5, 2)
    rng = np.random.default_rng(3)
    grid = np.sort(rng.uniform(0, 1, 17))
    vals = rng.standard_normal((17, 2))
    out = integrate_x(_sample_x(grid, vals), spec)
    E = eval_basis(spec, grid)
    for j in range(5):
        for l in range(2):
            ref = sum(E[u, j] * vals[u, l] * (grid[u] - grid[u - 1])
                      for u in range(1, 17))
            npt.assert_allclose(out[j * 2 + l], ref, rtol=1e-13)


def test_integrate_x_sine_against_quadrature():
    spec = make_bspline(0, 1, 8, 3)
    grid = np.linspace(0, 1, 1000)
    vals = np.sin(2 * np.pi * grid)[:, None]
    out = integrate_x(FunctionalSample(grid, vals), spec)
    ref = np.array([integral_against_basis(spec, lambda s: np.sin(2 * np.pi * s), j)
                    for j in range(8)])
    npt.assert_allclose(out, ref, atol=2e-3)


def test_integrate_x_linearity_exact():
    spec = make_bspline(0, 1, 6, 3)
    rng = np.random.default_rng(11)
    grid = np.linspace(0, 1, 30)
    f = rng.standard_normal((30, 2))
    g = rng.standard_normal((30, 2))
    a, b = 2.0, -0.75
    lhs = integrate_x(FunctionalSample(grid, a * f + b * g), spec)
    rhs = (a * integrate_x(FunctionalSample(grid, f), spec)
           + b * integrate_x(FunctionalSample(grid, g), spec))
    npt.assert_allclose(lhs, rhs, rtol=0, atol=1e-14)


def test_integrate_x_grid_refinement_converges():
    spec = make_bspline(0, 1, 6, 3)
    f = lambda s: np.exp(np.sin(3 * s))
    ref = np.array([integral_against_basis(spec, f, j) for j in range(6)])
    errs = []
    for g in (200, 400, 800):
        grid = np.linspace(0, 1, g + 1)
        out = integrate_x(FunctionalSample(grid, f(grid)[:, None]), spec)
        errs.append(np.abs(out - ref).max())
    assert errs[0] > errs[1] > errs[2]


def test_integrate_x_domain_error():
    spec = make_bspline(0, 1, 4, 3)
    s = _sample_x([0.0, 1.2], np.zeros((2, 1)))
    with pytest.raises(DataError):
        integrate_x(s, spec)


def test_integrate_y_zero_and_identity_whitening():
    spec = make_bspline(0, 1, 8, 3)
    g = gram(spec)
    grid = np.linspace(0, 1, 40)
    s = FunctionalSample(np.array([0, 1.0]), np.zeros((2, 1)),
                         grid, np.zeros((40, 2)))
    npt.assert_array_equal(integrate_y(s, spec, g), np.zeros(16))

    # degree-0 single function: Gram is [1], whitening is the identity
    spec0 = make_bspline(0, 1, 1, 0)
    g0 = gram(spec0)
    vals = np.cos(grid)[:, None]
    s0 = FunctionalSample(np.array([0, 1.0]), np.zeros((2, 1)), grid, vals)
    raw = integrate_x(FunctionalSample(grid, vals), spec0)
    npt.assert_allclose(integrate_y(s0, spec0, g0), raw, rtol=1e-15)


def test_integrate_y_whitening_matches_manual():
    spec = make_bspline(0, 1, 6, 3)
    g = gram(spec)
    rng = np.random.default_rng(5)
    grid = np.linspace(0, 1, 35)
    vals = rng.standard_normal((35, 3))
    s = FunctionalSample(np.array([0, 1.0]), np.zeros((2, 1)), grid, vals)
    raw = integrate_x(FunctionalSample(grid, vals), spec).reshape(6, 3)
    npt.assert_allclose(integrate_y(s, spec, g),
                        (g.J_inv_sqrt @ raw).ravel(), rtol=1e-13)


def test_integrate_y_round_trip_in_span():
    # curves in the basis span vanishing at both domain ends: the O(h)
    # boundary term of the right-endpoint rule drops and reconstruction
    # through the whitened coefficients is accurate to O(h^2)
    Jy, d = 8, 2
    spec = make_bspline(0, 1, Jy, 3)
    g = gram(spec)
    rng = np.random.default_rng(9)
    W = rng.standard_normal((d, Jy))
    W[:, 0] = 0.0
    W[:, -1] = 0.0
    grid = np.linspace(0, 1, 10001)
    E = eval_basis(spec, grid)
    yv = E @ W.T
    s = FunctionalSample(np.array([0, 1.0]), np.zeros((2, 1)), grid, yv)
    row = integrate_y(s, spec, g)
    coefs = row.reshape(Jy, d).T
    rec = np.einsum('mj,jk,lk->ml', E, g.J_inv_sqrt, coefs)
    assert np.abs(rec - yv).max() < 1e-6


def test_integrate_y_round_trip_general_scaling():
    # general basis-span curves: reconstruction error shrinks linearly in h
    Jy = 8
    spec = make_bspline(0, 1, Jy, 3)
    g = gram(spec)
    rng = np.random.default_rng(10)
    W = rng.standard_normal((1, Jy))
    errs = []
    for m in (1001, 10001):
        grid = np.linspace(0, 1, m)
        E = eval_basis(spec, grid)
        yv = E @ W.T
        s = FunctionalSample(np.array([0, 1.0]), np.zeros((2, 1)), grid, yv)
        coefs = integrate_y(s, spec, g).reshape(Jy, 1).T
        rec = np.einsum('mj,jk,lk->ml', E, g.J_inv_sqrt, coefs)
        errs.append(np.abs(rec - yv).max())
    assert errs[1] < 0.15 * errs[0]


def test_integrate_y_gram_mismatch():
    spec = make_bspline(0, 1, 6, 3)
    wrong = gram(make_bspline(0, 1, 5, 3))
    grid = np.linspace(0, 1, 10)
    s = FunctionalSample(np.array([0, 1.0]), np.zeros((2, 1)),
                         grid, np.zeros((10, 1)))
    with pytest.raises(ConfigError):
        integrate_y(s, spec, wrong)


def _toy_samples(n, p=2, d=3, seed=0):
    rng = np.random.default_rng(seed)
    sg = np.linspace(0, 1, 25)
    tg = np.linspace(0, 1, 30)
    return [FunctionalSample(sg, rng.standard_normal((25, p)),
                             tg, rng.standard_normal((30, d)))
            for _ in range(n)]


def test_assemble_single_row_equals_per_sample():
    xb, yb = make_bspline(0, 1, 5, 3), make_bspline(0, 1, 4, 3)
    yg = gram(yb)
    s = _toy_samples(1)[0]
    design = assemble_design([s], xb, yb, yg)
    npt.assert_array_equal(design.X[0], integrate_x(s, xb))
    npt.assert_array_equal(design.Y[0], integrate_y(s, yb, yg))
    assert (design.n, design.p, design.d) == (1, 2, 3)


def test_assemble_identical_samples_identical_rows():
    xb, yb = make_bspline(0, 1, 5, 3), make_bspline(0, 1, 4, 3)
    yg = gram(yb)
    s = _toy_samples(1, seed=4)[0]
    design = assemble_design([s, s, s], xb, yb, yg)
    npt.assert_array_equal(design.X[0], design.X[1])
    npt.assert_array_equal(design.X[1], design.X[2])
    npt.assert_array_equal(design.Y[0], design.Y[2])


def test_assemble_setting1_shapes():
    from nrrr import sim
    spec = sim.ScenarioSpec(n=100, n_test=1, p=10, d=10, r=5, rx=3, ry=3,
                            Jx=8, Jy=8, m=60, g=60, snr=1.0, rho=0.1, seed=0)
    data = sim.generate(spec)
    design = assemble_design(data.train, data.x_basis, data.y_basis,
                             data.y_gram)
    assert design.X.shape == (100, 80)
    assert design.Y.shape == (100, 80)


def test_assemble_inconsistent_dims():
    xb, yb = make_bspline(0, 1, 5, 3), make_bspline(0, 1, 4, 3)
    yg = gram(yb)
    a = _toy_samples(1, p=2, d=3)[0]
    b = _toy_samples(1, p=3, d=3)[0]
    with pytest.raises(DataError):
        assemble_design([a, b], xb, yb, yg)
    with pytest.raises(DataError):
        assemble_design([], xb, yb, yg)


def test_block_layout_round_trip():
    # de-blocking X by basis index and re-concatenating reproduces X exactly
    xb, yb = make_bspline(0, 1, 5, 3), make_bspline(0, 1, 4, 3)
    yg = gram(yb)
    design = assemble_design(_toy_samples(4), xb, yb, yg)
    blocks = [design.X[:, j * design.p:(j + 1) * design.p]
              for j in range(design.Jx)]
    npt.assert_array_equal(np.hstack(blocks), design.X)
    # and the per-sample vector de-blocks into the same columns
    x0 = integrate_x(_toy_samples(4)[0], xb).reshape(design.Jx, design.p)
    npt.assert_array_equal(x0[2], design.X[0, 2 * design.p:(3) * design.p])
