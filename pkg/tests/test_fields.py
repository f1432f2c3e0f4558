import numpy as np
import pytest

from vkshell.fields import (
    DIRICHLET,
    PERIODIC,
    Grid2D,
    GridMismatchError,
    MatrixField2,
    ScalarField,
    SizingError,
    VectorField2,
    airy_bracket,
    apply_diff,
    cof2,
    curl_t_curl,
    det2,
    div_t_div,
    integrate,
    load_csv,
    save_csv,
    sym_grad_values,
)

TWO_PI = 2.0 * np.pi


def test_grid_sizing_and_spacing():
    with pytest.raises(SizingError):
        Grid2D(4, 64, (0, 1, 0, 1))
    gp = Grid2D(10, 20, (0, 1, 0, 2), bc=PERIODIC)
    assert gp.dx == pytest.approx(0.1) and gp.dy == pytest.approx(0.1)
    gd = Grid2D(11, 21, (0, 1, 0, 2), bc=DIRICHLET)
    assert gd.dx == pytest.approx(0.1) and gd.dy == pytest.approx(0.1)
    assert gd.x1[-1] == pytest.approx(1.0)
    assert gp.x1[-1] == pytest.approx(1.0 - gp.dx)


def test_field_validation(square33):
    with pytest.raises(ValueError):
        ScalarField(square33, np.full((33, 33), np.nan))
    skew = np.zeros((33, 33, 2, 2))
    skew[..., 0, 1] = 1.0
    with pytest.raises(ValueError):
        MatrixField2(square33, skew, symmetric=True)
    other = Grid2D(33, 33, (0, 2, 0, 1), bc=DIRICHLET)
    with pytest.raises(GridMismatchError):
        airy_bracket(ScalarField.zeros(square33), ScalarField.zeros(other))


def test_derivative_of_constant_is_zero(square33, torus64):
    for grid in (square33, torus64):
        f = ScalarField.sample(grid, lambda x, y: 0 * x + 3.7)
        for kind in ("grad", "hessian", "laplacian", "bilaplacian"):
            out = apply_diff(f, kind)
            # roundoff amplified by 1/dx^2 (and squared for the bilaplacian)
            assert np.max(np.abs(out.data)) < 1e-8


def test_hessian_exact_for_quadratics(square33):
    f = ScalarField.sample(square33, lambda x, y: x * y)
    h = apply_diff(f, "hessian").data
    assert np.allclose(h[..., 0, 1], 1.0, atol=1e-12)
    assert np.allclose(h[..., 1, 0], 1.0, atol=1e-12)
    assert np.allclose(h[..., 0, 0], 0.0, atol=1e-12)
    # periodicized polynomial patch: exact away from the wrap seam
    gp = Grid2D(32, 32, (0, 1, 0, 1), bc=PERIODIC)
    hp = apply_diff(ScalarField.sample(gp, lambda x, y: x * y), "hessian").data
    inner = hp[2:-2, 2:-2]
    assert np.allclose(inner[..., 0, 1], 1.0, atol=1e-12)
    assert np.allclose(inner[..., 0, 0], 0.0, atol=1e-12)


def test_laplacian_analytic_oracle(torus64):
    # d^2/dx^2 + d^2/dy^2 of sin x sin y = -2 sin x sin y
    f = ScalarField.sample(torus64, lambda x, y: np.sin(x) * np.sin(y))
    lap = apply_diff(f, "laplacian").data
    err = np.max(np.abs(lap + 2.0 * f.data))
    assert err < 2.0 * max(torus64.dx, torus64.dy) ** 2


def test_bilaplacian_is_composed_laplacian(torus64, square33):
    for grid in (torus64, square33):
        rng = np.random.default_rng(3)
        f = ScalarField(grid, rng.standard_normal((grid.nx, grid.ny)))
        direct = apply_diff(f, "bilaplacian").data
        composed = grid.lap(grid.lap(f.data))
        assert np.array_equal(direct, composed)


def test_operator_convergence_order():
    # halving dx must cut the error by 4 up to 20 percent
    errs = {}
    for n in (32, 64):
        g = Grid2D(n, n, (0, TWO_PI, 0, TWO_PI), bc=PERIODIC)
        f = ScalarField.sample(g, lambda x, y: np.sin(x) * np.sin(2 * y))
        lap = apply_diff(f, "laplacian").data
        errs[n] = np.max(np.abs(lap + 5.0 * f.data))
    ratio = errs[32] / errs[64]
    assert 3.2 < ratio < 4.8


def test_curl_t_curl_kernel_and_oracles(square33):
    grid = square33
    # kernel: sym grad of a quadratic displacement, exact up to roundoff
    w = np.stack([grid.X1**2 + grid.X2, grid.X1 * grid.X2], axis=-1)
    b = MatrixField2(grid, sym_grad_values(grid, w), symmetric=True)
    assert np.max(np.abs(curl_t_curl(b).data)) < 1e-10
    # diag(x2^2/2, 0) -> 1 everywhere
    d = np.zeros((grid.nx, grid.ny, 2, 2))
    d[..., 0, 0] = grid.X2**2 / 2
    assert np.allclose(curl_t_curl(MatrixField2(grid, d)).data, 1.0, atol=1e-10)
    # 1/2 grad v x grad v with v = x1 x2 gives 1 (= -det hess v)
    v = ScalarField.sample(grid, lambda x, y: x * y)
    dv = np.stack([grid.d1(v.data, 0), grid.d1(v.data, 1)], axis=-1)
    outer = 0.5 * dv[..., :, None] * dv[..., None, :]
    assert np.allclose(curl_t_curl(MatrixField2(grid, outer, symmetric=True)).data, 1.0, atol=1e-9)


def test_div_t_div_oracles(torus64, square33):
    # constants are annihilated
    c = np.tile(np.array([[1.0, 2.0], [2.0, -1.0]]), (33, 33, 1, 1))
    assert np.max(np.abs(div_t_div(MatrixField2(square33, c, symmetric=True)).data)) < 1e-12
    # cof hess v0 lies in the kernel, analytic oracle v0 = sin x sin y
    v0 = ScalarField.sample(torus64, lambda x, y: np.sin(x) * np.sin(y))
    h = apply_diff(v0, "hessian")
    res = div_t_div(cof2(h)).data
    assert np.max(np.abs(res)) < 20.0 * torus64.dx**2
    # hess(sin x) maps to its bilaplacian sin x
    v1 = ScalarField.sample(torus64, lambda x, y: np.sin(x) + 0 * y)
    out = div_t_div(apply_diff(v1, "hessian")).data
    assert np.max(np.abs(out - np.sin(torus64.X1))) < 2.0 * torus64.dx**2


def test_cof_det_pointwise(rng, square33):
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    bf = MatrixField2(square33, np.tile(b, (33, 33, 1, 1)))
    assert np.allclose(cof2(bf).data, np.tile([[0, -1], [-1, 0]], (33, 33, 1, 1)))
    assert np.allclose(det2(bf).data, -1.0)
    eye = MatrixField2(square33, np.tile(np.eye(2), (33, 33, 1, 1)))
    assert np.allclose(cof2(eye).data, eye.data)
    assert np.allclose(det2(eye).data, 1.0)
    # cof B : B = 2 det B pointwise, random samples
    r = MatrixField2(square33, rng.standard_normal((33, 33, 2, 2)))
    lhs = np.sum(cof2(r).data * r.data, axis=(-2, -1))
    assert np.max(np.abs(lhs - 2.0 * det2(r).data)) < 1e-13


def test_airy_bracket(square33, torus64):
    # constant hessians: v = x^2, phi = y^2 -> 4
    v = ScalarField.sample(square33, lambda x, y: x * x)
    p = ScalarField.sample(square33, lambda x, y: y * y)
    assert np.allclose(airy_bracket(v, p).data, 4.0, atol=1e-10)
    # only mixed terms: v = phi = x y -> -2
    s = ScalarField.sample(square33, lambda x, y: x * y)
    assert np.allclose(airy_bracket(s, s).data, -2.0, atol=1e-10)
    # analytic oracle on the torus
    vt = ScalarField.sample(torus64, lambda x, y: np.sin(x) * np.sin(y))
    pt = ScalarField.sample(torus64, lambda x, y: np.cos(x))
    exact = -np.sin(torus64.X1) * np.sin(torus64.X2) * (-np.cos(torus64.X1))
    # [v,phi] = v_xx phi_yy + v_yy phi_xx - 2 v_xy phi_xy with phi_yy = phi_xy = 0
    assert np.max(np.abs(airy_bracket(vt, pt).data - exact)) < 10.0 * torus64.dx**2
    # exact symmetry
    assert np.array_equal(airy_bracket(vt, pt).data, airy_bracket(pt, vt).data)
    # [v, v] = 2 det hess v pointwise
    hv = apply_diff(vt, "hessian")
    assert np.max(np.abs(airy_bracket(vt, vt).data - 2.0 * det2(hv).data)) < 1e-12


def test_integrate(square33, torus64):
    assert integrate(ScalarField.sample(square33, lambda x, y: 0 * x + 1.0)) == pytest.approx(1.0)
    assert integrate(ScalarField.zeros(square33)) == 0.0
    val = integrate(ScalarField.sample(torus64, lambda x, y: np.sin(x) ** 2))
    assert val == pytest.approx(2.0 * np.pi**2, rel=1e-12)


def test_rank_one_identity(torus64):
    # curl^T curl (sym(grad v3 x grad v0)) = -cof(hess v0) : hess v3
    from vkshell.fields import grad_values, hessian_values, sym_values, cof2_values

    g = torus64
    v0 = ScalarField.sample(g, lambda x, y: np.sin(x) * np.sin(y))
    v3 = ScalarField.sample(g, lambda x, y: np.cos(x) * np.sin(2 * y))
    lhs = curl_t_curl(
        MatrixField2(
            g,
            sym_values(grad_values(g, v3.data)[..., :, None] * grad_values(g, v0.data)[..., None, :]),
            symmetric=True,
        )
    ).data
    rhs = -np.sum(cof2_values(hessian_values(g, v0.data)) * hessian_values(g, v3.data), axis=(-2, -1))
    assert np.max(np.abs(lhs - rhs)) < 30.0 * g.dx**2


def test_csv_roundtrip(tmp_path, square33, rng):
    for data, cls in [
        (rng.standard_normal((33, 33)), ScalarField),
        (rng.standard_normal((33, 33, 2)), VectorField2),
        (rng.standard_normal((33, 33, 2, 2)), MatrixField2),
    ]:
        fld = cls(square33, data)
        path = tmp_path / f"{cls.__name__}.csv"
        save_csv(fld, path)
        back = load_csv(path, square33)
        assert np.allclose(back.data, fld.data, rtol=0, atol=0)
    header = (tmp_path / "ScalarField.csv").read_text().splitlines()[0]
    assert header == "x1,x2,c11"
