import numpy as np
import pytest

from vkshell import energy as en
from vkshell import shell3d as sh
from vkshell.fields import (
    DIRICHLET,
    Grid2D,
    ScalarField,
    VectorField2,
    hessian_values,
    grad_values,
    sym_grad_values,
)
from vkshell.growth import GrowthFields, incompatibility


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def grid48():
    return Grid2D(48, 48, (0.0, 1.0, 0.0, 1.0), bc=DIRICHLET)


def sine_growth(grid, a_eps=0.2, a_kap=0.3):
    x, y = grid.X1, grid.X2
    eps = np.zeros((grid.nx, grid.ny, 3, 3))
    kap = np.zeros((grid.nx, grid.ny, 3, 3))
    eps[..., 0, 0] = a_eps * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    eps[..., 1, 1] = 0.5 * a_eps * np.cos(2 * np.pi * x)
    eps[..., 0, 2] = 0.2 * a_eps * np.sin(2 * np.pi * y)
    eps[..., 2, 0] = eps[..., 0, 2]
    kap[..., 0, 0] = a_kap * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    kap[..., 2, 2] = 0.3 * a_kap * np.cos(2 * np.pi * y)
    return GrowthFields.from_arrays(grid, eps, kap)


def test_shell_config_validation(grid48):
    v0 = ScalarField.sample(grid48, lambda x, y: x * y)
    with pytest.raises(ValueError):
        sh.ShellConfig(v0, alpha=1.0, h=-0.1)
    with pytest.raises(ValueError):
        sh.ShellConfig(v0, alpha=1.0, h=0.5)  # too thick for the unit square
    with pytest.raises(ValueError):
        sh.ShellConfig(v0, alpha=1.0, h=0.1, n_t=4)
    with pytest.raises(ValueError):
        sh.ShellConfig(ScalarField(grid48, 30.0 * grid48.X1), alpha=0.0, h=0.1)  # shallowness
    cfg = sh.ShellConfig(v0, alpha=2.0, h=0.05, n_t=5)
    assert cfg.gamma == pytest.approx(0.05**2)


def test_immersion_flat_and_tilted(grid48):
    z = ScalarField.zeros(grid48)
    imm = sh.immersion(sh.ShellConfig(z, alpha=1.0, h=0.05))
    assert np.allclose(imm.normal.data[..., 2], 1.0)
    pts = imm.phi_tilde(0.02)
    assert np.allclose(pts[..., 2], 0.02)
    # v0 = x1, gamma = 1: normal is (-1, 0, 1)/sqrt(2) everywhere
    v0 = ScalarField.sample(grid48, lambda x, y: x + 0 * y)
    imm2 = sh.immersion(sh.ShellConfig(v0, alpha=0.0, h=0.05))
    expect = np.array([-1.0, 0.0, 1.0]) / np.sqrt(2.0)
    assert np.max(np.abs(imm2.normal.data - expect)) < 1e-12


def test_immersion_unit_normal_and_orthogonality(grid48):
    v0 = ScalarField.sample(grid48, lambda x, y: 0.4 * x * y + 0.2 * x * x)
    imm = sh.immersion(sh.ShellConfig(v0, alpha=0.5, h=0.05))
    norms = np.linalg.norm(imm.normal.data, axis=-1)
    assert np.max(np.abs(norms - 1.0)) < 1e-14
    assert imm.tangent_normal_defect() < 1e-14


def test_growth_qh(grid48):
    v0 = ScalarField.sample(grid48, lambda x, y: x * y)
    cfg = sh.ShellConfig(v0, alpha=1.0, h=0.1)
    g0 = GrowthFields.zeros(grid48)
    q = sh.growth_qh(g0, cfg)
    assert np.allclose(q.at(0.03), np.eye(3))
    kap = np.zeros((grid48.nx, grid48.ny, 3, 3))
    kap[..., 0, 0] = 1.0
    gk = GrowthFields.from_arrays(grid48, np.zeros_like(kap), kap)
    qk = sh.growth_qh(gk, cfg)
    top = qk.at(0.05)
    assert np.allclose(top[..., 0, 0], 1.0 + 0.1 * 0.05)
    # affine structure: q(x3) + q(-x3) = 2 (Id + h^2 eps)
    x3 = 0.02
    avg = 0.5 * (qk.at(x3) + qk.at(-x3))
    assert np.allclose(avg, np.eye(3))
    with pytest.raises(ValueError):
        qk.at(0.2)


def test_density_w(rng):
    m = en.Material(1.0, 0.7)
    assert sh.density_W(np.eye(3), m) == 0.0
    for _ in range(10):
        r = random_rotation(rng)
        assert sh.density_W(r, m) < 1e-28
        f = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
        wf = sh.density_W(f, m)
        assert abs(sh.density_W(r @ f, m) - wf) <= 1e-13 * (1.0 + wf)
    # uniaxial stretch: W = mu/4 ((1+e)^2 - 1)^2 = mu e^2 + O(e^3)
    e = 1e-4
    m0 = en.Material(1.0, 0.0)
    val = sh.density_W(np.diag([1.0 + e, 1.0, 1.0]), m0)
    assert val == pytest.approx(0.25 * ((1 + e) ** 2 - 1) ** 2, rel=1e-12)
    assert val == pytest.approx(e * e, rel=1e-3)


def test_gauss_rule_exactness():
    grid = Grid2D(16, 16, (0, 1, 0, 1), bc=DIRICHLET)
    v0 = ScalarField.zeros(grid)
    cfg = sh.ShellConfig(v0, alpha=1.0, h=0.1, n_t=5)
    t, w = cfg.gauss_rule()
    for k in range(2 * 5):  # exact through degree 2 n - 1
        quad = float(np.sum(w * t**k))
        exact = 0.0 if k % 2 == 1 else (0.05) ** (k + 1) * 2.0 / (k + 1)
        assert quad == pytest.approx(exact, abs=1e-18, rel=1e-13)


def test_energy_3d_identity_and_rigid(grid48, rng):
    m = en.Material(1.0, 1.0)
    v0 = ScalarField.sample(grid48, lambda x, y: 0.3 * x * y)
    cfg = sh.ShellConfig(v0, alpha=1.0, h=0.05)
    g0 = GrowthFields.zeros(grid48)
    u_id = sh.identity_deformation(cfg)
    assert sh.energy_3d(u_id, g0, cfg, m) < 1e-26
    # rigid post-motion: u = R phi_tilde + c
    r = random_rotation(rng)
    grad = np.einsum("ab,k...bc->k...ac", r, u_id.grad_y)
    u_rot = sh.Deformation3D(cfg, u_id.x3, u_id.weights, grad)
    assert sh.energy_3d(u_rot, g0, cfg, m) < 1e-25


def test_energy_3d_frame_indifference(grid48, rng):
    m = en.Material(1.2, 0.6)
    v0 = ScalarField.sample(grid48, lambda x, y: 0.3 * x * y)
    g = sine_growth(grid48)
    cfg = sh.ShellConfig(v0, alpha=1.0, h=0.05)
    v = ScalarField(grid48, 0.2 * np.sin(np.pi * grid48.X1) * np.sin(np.pi * grid48.X2))
    w = VectorField2(grid48, np.stack([0.05 * grid48.X1**2, -0.04 * grid48.X2], axis=-1))
    u = sh.build_recovery(v, w, g, cfg, m)
    e0 = sh.energy_3d(u, g, cfg, m)
    r = random_rotation(rng)
    u_rot = sh.Deformation3D(cfg, u.x3, u.weights, np.einsum("ab,k...bc->k...ac", r, u.grad_y))
    e1 = sh.energy_3d(u_rot, g, cfg, m)
    assert abs(e1 - e0) <= 1e-12 * (1.0 + abs(e0))


def test_metric_pullback_slope(grid48):
    g = sine_growth(grid48)
    v0 = ScalarField.sample(grid48, lambda x, y: 0.7 * x * y + 0.15 * (x * x + y * y))
    hs = np.array([1e-1, 1e-2, 1e-3])
    res = np.array([sh.metric_residual(g, v0, h) for h in hs])
    slope = np.polyfit(np.log(hs), np.log(res), 1)[0]
    assert slope >= 2.7


def test_regime_resolution(grid48):
    v0 = ScalarField.sample(grid48, lambda x, y: x * y)
    z = ScalarField.zeros(grid48)
    assert sh.resolve_regime(sh.ShellConfig(z, alpha=0.5, h=0.05)) == sh.FLAT
    assert sh.resolve_regime(sh.ShellConfig(v0, alpha=2.0, h=0.05)) == sh.FLAT
    assert sh.resolve_regime(sh.ShellConfig(v0, alpha=1.0, h=0.05)) == sh.DMV
    assert sh.resolve_regime(sh.ShellConfig(v0, alpha=0.5, h=0.05)) == sh.CONSTRAINED
    with pytest.raises(sh.RegimeError):
        sh.resolve_regime(sh.ShellConfig(v0, alpha=0.0, h=0.05))


def test_recovery_trivial_flat(grid48):
    m = en.Material(1.0, 1.0)
    z = ScalarField.zeros(grid48)
    cfg = sh.ShellConfig(z, alpha=2.0, h=0.05)
    g0 = GrowthFields.zeros(grid48)
    u = sh.build_recovery(z, VectorField2.zeros(grid48), g0, cfg, m)
    assert sh.energy_3d(u, g0, cfg, m) < 1e-28
    # gradient is exactly the identity
    assert np.max(np.abs(u.grad_y - np.eye(3))) < 1e-14


def test_recovery_exact_compatibility_drives_energy_down(grid48):
    # growth built from the discrete state: both limit integrands vanish and
    # the scaled 3d energy decays like h^2
    grid = grid48
    m = en.Material(1.0, 1.0)
    z = ScalarField.zeros(grid)
    vc = 0.3 * np.sin(np.pi * grid.X1) * np.sin(np.pi * grid.X2)
    wc = np.stack([0.1 * grid.X1**2 * grid.X2, -0.05 * grid.X2**2], axis=-1)
    dv = grad_values(grid, vc)
    eps = np.zeros((grid.nx, grid.ny, 3, 3))
    kap = np.zeros((grid.nx, grid.ny, 3, 3))
    eps[..., :2, :2] = sym_grad_values(grid, wc) + 0.5 * dv[..., :, None] * dv[..., None, :]
    kap[..., :2, :2] = -hessian_values(grid, vc)
    g = GrowthFields.from_arrays(grid, eps, kap)
    st = en.PlateState(en.I40, VectorField2(grid, wc), ScalarField(grid, vc))
    assert en.energy_i40(st, g, m) == 0.0
    vals = []
    for h in (1e-1, 3e-2, 1e-2):
        cfg = sh.ShellConfig(z, alpha=2.0, h=h)
        u = sh.build_recovery(st.v, st.w, g, cfg, m)
        vals.append(sh.energy_3d(u, g, cfg, m) / h**4)
    assert vals[0] > vals[1] > vals[2]
    # decade sweep drops by an order of magnitude before the dx^2 floor bites
    assert vals[0] / vals[2] > 10.0


@pytest.mark.parametrize("alpha,regime", [(2.0, sh.FLAT), (1.0, sh.DMV), (0.5, sh.CONSTRAINED)])
def test_recovery_gamma_limit(grid48, alpha, regime):
    grid = grid48
    m = en.Material(1.3, 0.8)
    g = sine_growth(grid)
    x, y = grid.X1, grid.X2
    w = VectorField2(grid, np.stack([0.1 * x * x * y, -0.05 * y * y], axis=-1))
    if regime == sh.CONSTRAINED:
        v0 = ScalarField(grid, 0.5 * (x * x + y * y))
        a = 0.3
        v = ScalarField(grid, a * (x * x - y * y))
        vt = ScalarField(grid, 0.2 * x * y)
        wt = VectorField2(grid, np.stack([-2 * a * x**3 / 3, 2 * a * y**3 / 3], axis=-1))
        st = en.PlateState(en.I4INF, w, v, vt)
        e2d = en.energy_i4inf(st, g, m, v0, 0.0)[0]
        make = lambda cfg: sh.build_recovery(v, w, g, cfg, m, vtilde=vt, wtilde=wt)
    elif regime == sh.DMV:
        v0 = ScalarField(grid, 0.25 * (x * x + y * y))
        v = ScalarField(grid, v0.data + 0.3 * np.sin(np.pi * x) * np.sin(np.pi * y))
        st = en.PlateState(en.I41, w, v)
        e2d = en.energy_i41(st, g, m, v0)
        make = lambda cfg: sh.build_recovery(v, w, g, cfg, m)
    else:
        v0 = ScalarField(grid, 0.25 * (x * x + y * y))
        v = ScalarField(grid, 0.3 * np.sin(np.pi * x) * np.sin(np.pi * y))
        st = en.PlateState(en.I40, w, v)
        e2d = en.energy_i40(st, g, m)
        make = lambda cfg: sh.build_recovery(v, w, g, cfg, m)
    devs = []
    for h in (1e-1, 3e-2, 1e-2):
        cfg = sh.ShellConfig(v0, alpha=alpha, h=h, n_t=5)
        assert sh.resolve_regime(cfg) == regime
        e3 = sh.energy_3d(make(cfg), g, cfg, m)
        devs.append(abs(e3 / h**4 - e2d) / e2d)
    assert devs[-1] <= 0.05
    assert devs[0] > devs[-1]


def test_recovery_reconstructed_compensator_matches_analytic(grid48):
    grid = grid48
    m = en.Material(1.0, 1.0)
    g = sine_growth(grid, 0.1, 0.2)
    x, y = grid.X1, grid.X2
    v0 = ScalarField(grid, 0.5 * (x * x + y * y))
    a = 0.3
    v = ScalarField(grid, a * (x * x - y * y))
    vt = ScalarField(grid, 0.2 * x * y)
    w = VectorField2(grid, np.stack([0.1 * x * x * y, -0.05 * y * y], axis=-1))
    wt = VectorField2(grid, np.stack([-2 * a * x**3 / 3, 2 * a * y**3 / 3], axis=-1))
    h = 1e-2
    cfg = sh.ShellConfig(v0, alpha=0.5, h=h, n_t=5)
    e_analytic = sh.energy_3d(sh.build_recovery(v, w, g, cfg, m, vtilde=vt, wtilde=wt), g, cfg, m)
    e_reconstr = sh.energy_3d(sh.build_recovery(v, w, g, cfg, m, vtilde=vt), g, cfg, m)
    assert e_reconstr == pytest.approx(e_analytic, rel=2e-2)


def test_scaling_study_table(grid48):
    m = en.Material(1.0, 1.0)
    g = sine_growth(grid48)
    v0 = ScalarField(grid48, 0.25 * grid48.X1 * grid48.X2)
    st = en.PlateState(
        en.I40,
        VectorField2(grid48, np.stack([0.1 * grid48.X1, 0.05 * grid48.X2], axis=-1)),
        ScalarField(grid48, 0.2 * np.sin(np.pi * grid48.X1) * np.sin(np.pi * grid48.X2)),
    )
    study = sh.scaling_study(2.0, [1e-1, 3e-2, 1e-2], g, v0, st, m)
    assert study.regime == sh.FLAT and study.limit_name == en.I40
    assert len(study.rows) == 3
    lines = study.csv_lines()
    assert lines[0] == "h,gamma,E3d,E3d_over_h4,E2d_limit,ratio"
    assert len(lines) == 4
    # limit column is constant and equals the functional value
    e2d = en.energy_i40(st, g, m)
    for r in study.rows:
        assert r.e2d_limit == e2d
        assert r.ratio == pytest.approx(r.e3d_over_h4 / e2d)
    with pytest.raises(ValueError):
        sh.scaling_study(2.0, [1e-2, 1e-1], g, v0, st, m)


def test_scaling_limits_collapse_for_flat_reference(grid48):
    # with v0 = 0 every alpha lands in the flat regime and the whole table,
    # limit value included, is independent of alpha
    m = en.Material(1.0, 1.0)
    g = sine_growth(grid48)
    z = ScalarField.zeros(grid48)
    st = en.PlateState(
        en.I40,
        VectorField2(grid48, np.stack([0.1 * grid48.X1, 0.05 * grid48.X2], axis=-1)),
        ScalarField(grid48, 0.2 * np.sin(np.pi * grid48.X1) * np.sin(np.pi * grid48.X2)),
    )
    studies = [sh.scaling_study(a, [1e-1, 1e-2], g, z, st, m) for a in (0.5, 1.0, 2.0)]
    assert all(s.regime == sh.FLAT for s in studies)
    base = [(r.e3d, r.e2d_limit) for r in studies[0].rows]
    for s in studies[1:]:
        assert [(r.e3d, r.e2d_limit) for r in s.rows] == base


def test_scaling_bands(grid48):
    m = en.Material(1.0, 1.0)
    grid = grid48
    v0 = ScalarField(grid, 0.5 * grid.X1 * grid.X2)
    # incompatible bending growth, zero state: bounded band
    g = sine_growth(grid, 0.0, 0.5)
    _, inorm = incompatibility(g)
    assert inorm > 0.1
    st0 = en.PlateState.zeros(grid, en.I40)
    study = sh.scaling_study(2.0, [1e-1, 3e-2, 1e-2, 3e-3], g, v0, st0, m)
    vals = [r.e3d_over_h4 for r in study.rows]
    ref = vals[2]
    assert all(0.5 * ref <= v <= 2.0 * ref for v in vals)
