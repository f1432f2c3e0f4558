"""The 3d side of the limit statements: shell geometry, growth, energy
quadrature, recovery deformations, and the thickness-scaling study.

Geometry.  The mid-surface is the graph x -> (x, gamma v0(x)) with
gamma = h^alpha; the plate-to-shell chart is phi_tilde(x, x3) =
phi(x) + x3 n(x) with n the unit normal.  All derivatives of the chart
are assembled in closed form from the stencil derivatives of v0 (chain
rule, never by re-differencing normal samples), so |n| = 1 and the
tangent-normal orthogonality hold exactly in floating point.

Energy.  The scaled energy (1/h) int W(grad u (q^h)^-1) dz is evaluated
by the change of variables z = phi_tilde(x, x3): in-plane node quadrature
times Gauss-Legendre through the thickness, with the exact Jacobian
det(grad phi_tilde).  W is the St. Venant-Kirchhoff density
W(F) = mu/4 |F^T F - Id|^2 + lambda/8 tr(F^T F - Id)^2: exactly frame
indifferent and isotropic, with D^2 W(Id) inducing the Q3 of the energy
module.  It violates the global quadratic lower bound far from SO(3),
which none of the desk-scale deformations approach; a distance guard
flags any quadrature point beyond 0.3.

Recovery.  One Kirchhoff-Love-plus-warping ansatz covers all regimes:
deformed mid-surface Y(x) (per-regime displacement scaling), exact unit
normal nu of Y, and the normal warping

    y = Y + x3 nu + x3 h^2 d0 + 1/2 x3^2 h d1,
    d0 = l(eps_g) + 2 c(stretching integrand),
    d1 = l(kappa_g) - 2 c(bending integrand),

with l and c from the energy module.  Expanding (grad y)^T grad y against
the pulled-back metric shows the order-h^2 strain is exactly
[S - (x3/h) K]^* + sym((d0 + (x3/h) d1 - l(...)) x e3), which the above
warping relaxes pointwise to Q2; the scaled energies then converge to the
regime-matched two-dimensional functional.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import energy as en
from .fields import (
    Grid2D,
    ScalarField,
    VectorField2,
    VectorField3,
    grad_values,
    hessian_values,
    sym_values,
)
from .growth import GrowthFields, embed2, incompatibility
from .solver import reconstruct_displacement

FLAT = "flat"  # alpha > 1, or v0 identically zero: limit I40
DMV = "dmv"  # alpha = 1 (blooming): limit I41
CONSTRAINED = "constrained"  # 0 < alpha < 1: limit I4INF
REGIMES = (FLAT, DMV, CONSTRAINED)

DIST_SO3_GUARD = 0.3


class RegimeError(ValueError):
    """Shell configuration outside the supported recovery regimes."""


@dataclass(frozen=True)
class ShellConfig:
    """Thin shallow shell (S_gamma)^h around the graph of gamma v0."""

    v0: ScalarField
    alpha: float
    h: float
    n_t: int = 5

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError("thickness must be positive")
        if self.alpha < 0.0:
            raise ValueError("alpha must be nonnegative")
        if self.n_t < 3 or self.n_t % 2 == 0:
            raise ValueError("n_t must be an odd integer >= 3")
        g = self.grid
        a1, b1, a2, b2 = g.domain
        extent = min(b1 - a1, b2 - a2)
        if self.h > 0.2 * extent:
            raise ValueError(f"thickness {self.h} too large for domain extent {extent}")
        slope = float(np.max(np.abs(grad_values(g, self.v0.data))))
        # boundary value 1 admitted: the unit-slope tilted-plane case sits there
        if self.gamma * slope > 1.0 + 1e-12:
            raise ValueError("shallowness violated: gamma * max|grad v0| must stay below 1")

    @property
    def grid(self) -> Grid2D:
        return self.v0.grid

    @property
    def gamma(self) -> float:
        return float(self.h**self.alpha)

    def gauss_rule(self) -> tuple[np.ndarray, np.ndarray]:
        """Thickness nodes/weights on (-h/2, h/2)."""
        t, w = np.polynomial.legendre.leggauss(self.n_t)
        return 0.5 * self.h * t, 0.5 * self.h * w


class Immersion:
    """Chart phi_tilde and its exact frame, built from stencil derivatives."""

    def __init__(self, cfg: ShellConfig):
        grid = cfg.grid
        self.cfg = cfg
        self.grid = grid
        g = cfg.gamma
        dv = grad_values(grid, cfg.v0.data)
        hv = hessian_values(grid, cfg.v0.data)
        n2 = 1.0 + g * g * (dv[..., 0] ** 2 + dv[..., 1] ** 2)
        nfac = np.sqrt(n2)
        nvec = np.empty((grid.nx, grid.ny, 3))
        nvec[..., 0] = -g * dv[..., 0] / nfac
        nvec[..., 1] = -g * dv[..., 1] / nfac
        nvec[..., 2] = 1.0 / nfac
        self._normal = nvec
        self._tangents = np.zeros((grid.nx, grid.ny, 3, 2))
        self._tangents[..., 0, 0] = 1.0
        self._tangents[..., 1, 1] = 1.0
        self._tangents[..., 2, :] = g * dv
        # dn[..., :, j] = d_j n by the chain rule on n = (-g grad v0, 1)/N
        dn = np.empty((grid.nx, grid.ny, 3, 2))
        dnfac = g * g * (dv[..., 0:1] * hv[..., 0, :] + dv[..., 1:2] * hv[..., 1, :]) / nfac[..., None]
        for j in range(2):
            dn[..., 0, j] = (-g * hv[..., 0, j] - nvec[..., 0] * dnfac[..., j]) / nfac
            dn[..., 1, j] = (-g * hv[..., 1, j] - nvec[..., 1] * dnfac[..., j]) / nfac
            dn[..., 2, j] = -nvec[..., 2] * dnfac[..., j] / nfac
        self._dn = dn
        self._v0 = cfg.v0.data
        self._gamma = g

    @property
    def normal(self) -> VectorField3:
        return VectorField3(self.grid, self._normal)

    def phi_tilde(self, x3: float) -> np.ndarray:
        """Chart points (nx, ny, 3) at thickness offset x3."""
        grid = self.grid
        pts = np.empty((grid.nx, grid.ny, 3))
        pts[..., 0] = grid.X1
        pts[..., 1] = grid.X2
        pts[..., 2] = self._gamma * self._v0
        return pts + x3 * self._normal

    def grad_phi_tilde(self, x3: float) -> np.ndarray:
        """Exact chart Jacobian (nx, ny, 3, 3): columns d1, d2, normal."""
        out = np.empty(self._tangents.shape[:2] + (3, 3))
        out[..., :2] = self._tangents + x3 * self._dn
        out[..., 2] = self._normal
        return out

    def tangent_normal_defect(self) -> float:
        """max |d_i phi . n| at the mid-surface; zero by construction."""
        dots = np.einsum("...ij,...i->...j", self._tangents, self._normal)
        return float(np.max(np.abs(dots)))


def immersion(cfg: ShellConfig) -> Immersion:
    """Shell chart with unit normal; |n| = 1 holds exactly at every node."""
    return Immersion(cfg)


class GrowthEvaluator:
    """q^h(x, x3) = Id + h^2 eps_g(x) + h x3 kappa_g(x), exact in x3."""

    def __init__(self, g: GrowthFields, cfg: ShellConfig):
        cfg.grid.require_same(g.grid, "growth and shell")
        self.g = g
        self.cfg = cfg
        self._eye = np.eye(3)

    def at(self, x3: float) -> np.ndarray:
        if abs(x3) > 0.5 * self.cfg.h * (1.0 + 1e-12):
            raise ValueError(f"x3 = {x3} outside the shell of thickness {self.cfg.h}")
        h = self.cfg.h
        q = self._eye + h * h * self.g.eps_g.data + h * x3 * self.g.kappa_g.data
        dets = np.linalg.det(q)
        if np.any(dets <= 0.0):
            raise ValueError("growth tensor q^h is not invertible at some node")
        return q

    def inverse_at(self, x3: float) -> np.ndarray:
        return np.linalg.inv(self.at(x3))


def growth_qh(g: GrowthFields, cfg: ShellConfig) -> GrowthEvaluator:
    return GrowthEvaluator(g, cfg)


def density_W(F: np.ndarray, m: en.Material) -> np.ndarray | float:
    """St. Venant-Kirchhoff density; zero exactly on SO(3)."""
    F = np.asarray(F, dtype=float)
    e = np.einsum("...ki,...kj->...ij", F, F)
    e[..., 0, 0] -= 1.0
    e[..., 1, 1] -= 1.0
    e[..., 2, 2] -= 1.0
    tr = np.trace(e, axis1=-2, axis2=-1)
    out = 0.25 * m.mu * np.sum(e * e, axis=(-2, -1)) + 0.125 * m.lam * tr * tr
    return float(out) if out.ndim == 0 else out


def dist_so3(F: np.ndarray) -> np.ndarray:
    """Frobenius distance to SO(3) via singular values (orientation kept)."""
    sv = np.linalg.svd(F, compute_uv=False)
    return np.sqrt(np.sum((sv - 1.0) ** 2, axis=-1))


@dataclass(frozen=True)
class Deformation3D:
    """Analytic deformation gradient samples grad y at (node, Gauss) pairs.

    grad_y[k] is the Jacobian of y(x, x3) at thickness node x3[k]; built in
    closed form (stencils in-plane, exact in x3), never by differencing
    across the thin direction.
    """

    cfg: ShellConfig
    x3: np.ndarray
    weights: np.ndarray
    grad_y: np.ndarray  # (n_t, nx, ny, 3, 3)

    def __post_init__(self):
        want = (self.cfg.n_t, self.cfg.grid.nx, self.cfg.grid.ny, 3, 3)
        if self.grad_y.shape != want:
            raise ValueError(f"grad_y shape {self.grad_y.shape}, expected {want}")


def identity_deformation(cfg: ShellConfig) -> Deformation3D:
    """u = id on the shell: grad y coincides with the chart Jacobian."""
    imm = Immersion(cfg)
    x3, wts = cfg.gauss_rule()
    grad = np.stack([imm.grad_phi_tilde(t) for t in x3])
    return Deformation3D(cfg, x3, wts, grad)


def energy_3d(
    u: Deformation3D,
    g: GrowthFields,
    cfg: ShellConfig,
    m: en.Material,
    return_diagnostics: bool = False,
):
    """Thickness-averaged prestrained energy (1/h) int W(grad u (q^h)^-1).

    Quadrature: node weights in plane, Gauss through the thickness, exact
    volume Jacobian det(grad phi_tilde).  Accumulation is compensated
    (math.fsum over all weighted point values), hence order independent.
    """
    if u.cfg is not cfg and (u.cfg.h != cfg.h or u.cfg.alpha != cfg.alpha or u.cfg.grid != cfg.grid):
        raise ValueError("deformation was built for a different shell configuration")
    cfg.grid.require_same(g.grid, "growth and shell")
    imm = Immersion(cfg)
    qh = growth_qh(g, cfg)
    qw = cfg.grid.quad_weights
    contributions = []
    min_det = math.inf
    max_dist = 0.0
    flagged = 0
    for k, (x3, gw) in enumerate(zip(u.x3, u.weights)):
        gp = imm.grad_phi_tilde(x3)
        jac = np.linalg.det(gp)
        a = u.grad_y[k] @ np.linalg.inv(gp)
        det_u = np.linalg.det(a)
        min_det = min(min_det, float(det_u.min()))
        f = a @ qh.inverse_at(x3)
        d = dist_so3(f)
        max_dist = max(max_dist, float(d.max()))
        flagged += int(np.count_nonzero(d > DIST_SO3_GUARD))
        wvals = density_W(f, m)
        contributions.append((gw / cfg.h) * qw * wvals * jac)
    total = math.fsum(np.concatenate([c.ravel() for c in contributions]).tolist())
    diag = {"min_det_grad_u": min_det, "max_dist_so3": max_dist, "points_beyond_guard": flagged}
    if min_det <= 0.0:
        warnings.warn("deformation gradient loses orientation at a quadrature point")
        diag["orientation_lost"] = True
    if flagged:
        warnings.warn(
            f"{flagged} quadrature points farther than {DIST_SO3_GUARD} from SO(3); "
            "the quadratic lower bound of the density is only local"
        )
    if return_diagnostics:
        return total, diag
    return total


# -- recovery deformations -------------------------------------------------------

def resolve_regime(cfg: ShellConfig) -> str:
    """Regime selection: flat for alpha > 1 or v0 = 0, blooming at alpha = 1,
    constrained for 0 < alpha < 1."""
    if float(np.max(np.abs(cfg.v0.data))) == 0.0:
        return FLAT
    if cfg.alpha > 1.0:
        return FLAT
    if cfg.alpha == 1.0:
        return DMV
    if cfg.alpha > 0.0:
        return CONSTRAINED
    raise RegimeError("alpha = 0 with curved v0 is the general-shell theory, out of scope")


def limit_functional_name(regime: str) -> str:
    return {FLAT: en.I40, DMV: en.I41, CONSTRAINED: en.I4INF}[regime]


def _grad3(grid: Grid2D, comps: np.ndarray) -> np.ndarray:
    """In-plane Jacobian (nx, ny, 3, 2) of a 3-component field (nx, ny, 3)."""
    out = np.empty(comps.shape[:2] + (3, 2))
    for c in range(3):
        for j in range(2):
            out[..., c, j] = grid.d1(comps[..., c], j)
    return out


def build_recovery(
    v: ScalarField,
    w: VectorField2,
    g: GrowthFields,
    cfg: ShellConfig,
    m: en.Material,
    vtilde: ScalarField | None = None,
    wtilde: VectorField2 | None = None,
) -> Deformation3D:
    """Recovery deformation for the regime selected by cfg.

    Displacement ladder on the deformed mid-surface Y (gamma = h^alpha):

      flat (alpha > 1 or v0 = 0):  Y = (x + h^2 w, gamma v0 + h v)
      blooming (alpha = 1):        Y = (x + h^2 w, h v)   [rest state v = v0]
      constrained (0 < alpha < 1): Y = (x + h^(1+alpha) wtilde + h^2 w,
                                        gamma v0 + h v + h^(2-alpha) vtilde)

    with the exact unit normal of Y as the fiber direction and the limit
    warping d0 = l(eps_g) + 2 c(S), d1 = l(kappa_g) - 2 c(K) built from the
    regime's stretching/bending integrands.  In the constrained regime the
    in-plane compensator wtilde (sym grad wtilde = -sym(grad v x grad v0),
    which exists when the linearized isometry constraint holds) is
    reconstructed by line integration when not supplied.
    """
    grid = cfg.grid
    grid.require_same(v.grid, "state and shell")
    grid.require_same(w.grid, "state and shell")
    grid.require_same(g.grid, "growth and shell")
    regime = resolve_regime(cfg)
    h = cfg.h
    gamma = cfg.gamma

    dv = grad_values(grid, v.data)
    dv0 = grad_values(grid, cfg.v0.data)
    outer_vv = dv[..., :, None] * dv[..., None, :]
    from .fields import sym_grad_values  # local: avoid a wide import list above

    stretch = sym_grad_values(grid, w.data) + 0.5 * outer_vv - sym_values(g.eps_g.data)[..., :2, :2]
    bend = hessian_values(grid, v.data) + sym_values(g.kappa_g.data)[..., :2, :2]

    disp12 = h * h * w.data.copy()
    if regime == FLAT:
        y3 = gamma * cfg.v0.data + h * v.data
    elif regime == DMV:
        y3 = h * v.data
        outer_00 = dv0[..., :, None] * dv0[..., None, :]
        stretch = stretch - 0.5 * outer_00
        bend = bend - hessian_values(grid, cfg.v0.data)
    else:
        if vtilde is None:
            raise RegimeError("the constrained regime needs vtilde")
        grid.require_same(vtilde.grid, "state and shell")
        if wtilde is None:
            e = -sym_values(dv[..., :, None] * dv0[..., None, :])
            wtilde = VectorField2(grid, reconstruct_displacement(e, grid))
        grid.require_same(wtilde.grid, "state and shell")
        y3 = gamma * cfg.v0.data + h * v.data + h ** (2.0 - cfg.alpha) * vtilde.data
        disp12 = disp12 + h ** (1.0 + cfg.alpha) * wtilde.data
        dvt = grad_values(grid, vtilde.data)
        stretch = stretch + sym_values(dvt[..., :, None] * dv0[..., None, :])

    ycomps = np.empty((grid.nx, grid.ny, 3))
    ycomps[..., 0] = grid.X1 + disp12[..., 0]
    ycomps[..., 1] = grid.X2 + disp12[..., 1]
    ycomps[..., 2] = y3

    # Jacobian of Y: differentiate the displacement, not the raw coordinates
    dy = np.zeros((grid.nx, grid.ny, 3, 2))
    dy[..., 0, 0] = 1.0
    dy[..., 1, 1] = 1.0
    for j in range(2):
        dy[..., 0, j] += grid.d1(disp12[..., 0], j)
        dy[..., 1, j] += grid.d1(disp12[..., 1], j)
        dy[..., 2, j] = grid.d1(y3, j)

    cross = np.cross(dy[..., 0], dy[..., 1])
    nu = cross / np.linalg.norm(cross, axis=-1, keepdims=True)

    _, c_s = en.q2(stretch, m)
    _, c_k = en.q2(bend, m)
    d0 = en.warping_l(g.eps_g.data) + 2.0 * c_s
    d1 = en.warping_l(g.kappa_g.data) - 2.0 * c_k

    dnu = _grad3(grid, nu)
    dd0 = _grad3(grid, d0)
    dd1 = _grad3(grid, d1)

    x3, wts = cfg.gauss_rule()
    grad = np.empty((cfg.n_t, grid.nx, grid.ny, 3, 3))
    for k, t in enumerate(x3):
        grad[k, ..., :2] = dy + t * dnu + t * h * h * dd0 + 0.5 * t * t * h * dd1
        grad[k, ..., 2] = nu + h * h * d0 + t * h * d1
    return Deformation3D(cfg, x3, wts, grad)


# -- metric pullback consistency ---------------------------------------------------

def metric_residual(g: GrowthFields, v0: ScalarField, h: float, n_t: int = 3) -> float:
    """Max-norm defect of the pulled-back metric expansion at gamma = h.

    Assembles g^h = (grad phi_tilde)^T (q^h)^T q^h (grad phi_tilde) exactly
    and subtracts Id + h^2 (2 sym eps_g + (grad v0 x grad v0)^*)
    + 2 h x3 (sym kappa_g - (hess v0)^*); the defect is O(h^3) with a
    grid-independent constant because both sides share one set of discrete
    derivatives.
    """
    cfg = ShellConfig(v0, alpha=1.0, h=h, n_t=n_t)
    grid = cfg.grid
    imm = Immersion(cfg)
    qh = growth_qh(g, cfg)
    dv0 = grad_values(grid, v0.data)
    hv0 = hessian_values(grid, v0.data)
    outer = embed2(dv0[..., :, None] * dv0[..., None, :])
    hess3 = embed2(hv0)
    eps_s = sym_values(g.eps_g.data)
    kap_s = sym_values(g.kappa_g.data)
    eye = np.eye(3)
    worst = 0.0
    for x3 in (-0.5 * h, 0.0, 0.5 * h):
        gp = imm.grad_phi_tilde(x3)
        q = qh.at(x3)
        assembled = np.einsum("...ki,...kl,...lj->...ij", gp, np.einsum("...ki,...kj->...ij", q, q), gp)
        predicted = eye + h * h * (2.0 * eps_s + outer) + 2.0 * h * x3 * (kap_s - hess3)
        worst = max(worst, float(np.max(np.abs(assembled - predicted))))
    return worst


# -- scaling study -----------------------------------------------------------------

@dataclass(frozen=True)
class ScalingRow:
    h: float
    gamma: float
    e3d: float
    e3d_over_h4: float
    e2d_limit: float
    ratio: float


@dataclass(frozen=True)
class ScalingStudy:
    rows: tuple
    regime: str
    limit_name: str
    incompatibility_norm: float

    def csv_lines(self) -> list[str]:
        lines = ["h,gamma,E3d,E3d_over_h4,E2d_limit,ratio"]
        for r in self.rows:
            lines.append(
                ",".join(
                    f"{x:.17g}"
                    for x in (r.h, r.gamma, r.e3d, r.e3d_over_h4, r.e2d_limit, r.ratio)
                )
            )
        return lines

    def metadata(self) -> dict:
        return {
            "regime": self.regime,
            "limit_functional": self.limit_name,
            "incompatibility_norm": self.incompatibility_norm,
        }


def scaling_study(
    alpha: float,
    h_list,
    g: GrowthFields,
    v0: ScalarField,
    state: en.PlateState,
    m: en.Material,
    n_t: int = 5,
    wtilde: VectorField2 | None = None,
) -> ScalingStudy:
    """Recovery-sequence energy sweep h -> h^-4 I^3d against the 2d limit.

    Rows are ordered by the given (decreasing) h list; the regime-matched
    limit functional supplies E2d; the incompatibility norm of the growth
    rides along as metadata.
    """
    h_list = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly decreasing")
    _, inorm = incompatibility(g)

    cfg0 = ShellConfig(v0, alpha=alpha, h=h_list[0], n_t=n_t)
    regime = resolve_regime(cfg0)
    limit_name = limit_functional_name(regime)
    if regime == FLAT:
        e2d = en.energy_i40(state, g, m)
    elif regime == DMV:
        e2d = en.energy_i41(state, g, m, v0)
    else:
        e2d = en.energy_i4inf(state, g, m, v0, 0.0)[0]

    rows = []
    for h in h_list:
        cfg = ShellConfig(v0, alpha=alpha, h=h, n_t=n_t)
        u = build_recovery(state.v, state.w, g, cfg, m, vtilde=state.vtilde, wtilde=wtilde)
        e3 = energy_3d(u, g, cfg, m)
        scaled = e3 / h**4
        ratio = scaled / e2d if e2d != 0.0 else math.nan
        rows.append(ScalingRow(h, cfg.gamma, e3, scaled, e2d, ratio))
    return ScalingStudy(tuple(rows), regime, limit_name, inorm)
