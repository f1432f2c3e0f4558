"""Growth tensors and the scalar sources they induce.

The in-plane stretching tensor eps_g and the bending tensor kappa_g are
3x3 fields over the mid-plate.  From them we derive

* lambda_g = curl^T curl of the tangential minor of eps_g,
* omega_g  = div^T div  of (tangential kappa + nu * cof tangential kappa),
* the shallow-shell effective growth obtained by pulling the metric back
  through the graph parametrization (eps picks up 1/2 grad(v0) x grad(v0),
  kappa loses hess(v0)),
* the incompatibility field curl (sym kappa_g)_tan whose non-vanishing
  drives the h^4 energy scaling,
* the tangential pullback of an ambient bilinear form along the graph map.

Polynomial entry specifications keep every derived quantity testable
against exact analytic oracles; trigonometric presets cover the periodic
test arena.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import (
    Grid2D,
    MatrixField2,
    MatrixField3,
    ScalarField,
    VectorField2,
    cof2_values,
    curl_t_curl,
    div_t_div,
    grad_values,
    hessian_values,
    sym_values,
)

MAX_DEGREE = 6


class GrowthSpecError(ValueError):
    """Malformed polynomial growth specification."""


Term = tuple[float, int, int]  # coef * x1^p * x2^q


def _check_terms(terms, where: str):
    out = []
    for t in terms:
        if len(t) != 3:
            raise GrowthSpecError(f"{where}: term {t!r} is not a (coef, p, q) triple")
        coef, p, q = float(t[0]), int(t[1]), int(t[2])
        if not math.isfinite(coef):
            raise GrowthSpecError(f"{where}: non-finite coefficient {t!r}")
        if p < 0 or q < 0:
            raise GrowthSpecError(f"{where}: negative exponent in {t!r}")
        if p + q > MAX_DEGREE:
            raise GrowthSpecError(f"{where}: total degree {p + q} exceeds {MAX_DEGREE}")
        out.append((coef, p, q))
    return tuple(out)


@dataclass(frozen=True)
class GrowthSpec:
    """Polynomial entries for eps_g and kappa_g, keyed by 1-based (i, j)."""

    eps_entries: dict = field(default_factory=dict)
    kappa_entries: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, entries in (("eps", self.eps_entries), ("kappa", self.kappa_entries)):
            clean = {}
            for ij, terms in entries.items():
                i, j = int(ij[0]), int(ij[1])
                if not (1 <= i <= 3 and 1 <= j <= 3):
                    raise GrowthSpecError(f"{name}: index {ij} out of range")
                clean[(i, j)] = _check_terms(terms, f"{name}[{i},{j}]")
            object.__setattr__(self, f"{name}_entries", clean)

    @classmethod
    def from_config(cls, block: dict) -> "GrowthSpec":
        """Parse flat config keys 'eps.i.j' / 'kappa.i.j' -> term triples."""
        eps, kappa = {}, {}
        for key, terms in block.items():
            parts = key.split(".")
            if len(parts) != 3 or parts[0] not in ("eps", "kappa"):
                raise GrowthSpecError(f"unknown growth entry key {key!r}")
            try:
                ij = (int(parts[1]), int(parts[2]))
            except ValueError:
                raise GrowthSpecError(f"bad index in growth key {key!r}") from None
            (eps if parts[0] == "eps" else kappa)[ij] = terms
        return cls(eps, kappa)


@dataclass(frozen=True)
class GrowthFields:
    """Sampled eps_g, kappa_g on a grid."""

    eps_g: MatrixField3
    kappa_g: MatrixField3

    def __post_init__(self):
        self.eps_g.grid.require_same(self.kappa_g.grid, "growth tensors")

    @property
    def grid(self) -> Grid2D:
        return self.eps_g.grid

    @classmethod
    def zeros(cls, grid: Grid2D) -> "GrowthFields":
        return cls(MatrixField3.zeros(grid), MatrixField3.zeros(grid))

    @classmethod
    def from_arrays(cls, grid: Grid2D, eps: np.ndarray, kappa: np.ndarray) -> "GrowthFields":
        return cls(MatrixField3(grid, eps), MatrixField3(grid, kappa))


def eval_poly(terms, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(X1)
    for coef, p, q in terms:
        out = out + coef * X1**p * X2**q
    return out


def eval_growth(spec: GrowthSpec, grid: Grid2D) -> GrowthFields:
    """Sample the polynomial spec exactly at the grid nodes."""
    eps = np.zeros((grid.nx, grid.ny, 3, 3))
    kappa = np.zeros((grid.nx, grid.ny, 3, 3))
    for (i, j), terms in spec.eps_entries.items():
        eps[..., i - 1, j - 1] = eval_poly(terms, grid.X1, grid.X2)
    for (i, j), terms in spec.kappa_entries.items():
        kappa[..., i - 1, j - 1] = eval_poly(terms, grid.X1, grid.X2)
    return GrowthFields.from_arrays(grid, eps, kappa)


def _sym_tan(m: MatrixField3) -> np.ndarray:
    """Tangential (2x2) minor of the symmetric part, as raw values."""
    return sym_values(m.data)[..., :2, :2]


def lambda_g(g: GrowthFields) -> ScalarField:
    """curl^T curl of the tangential minor of eps_g."""
    tan = _sym_tan(g.eps_g)
    return curl_t_curl(MatrixField2(g.grid, tan, symmetric=True))


def omega_g(g: GrowthFields, nu: float) -> ScalarField:
    """div^T div ((sym kappa_g)_tan + nu cof (sym kappa_g)_tan)."""
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"Poisson ratio must sit in [0, 1/2), got {nu}")
    tan = _sym_tan(g.kappa_g)
    comb = tan + nu * cof2_values(tan)
    return div_t_div(MatrixField2(g.grid, comb, symmetric=True))


def embed2(tan: np.ndarray) -> np.ndarray:
    """Embed a 2x2 block as the principal minor of a zero-padded 3x3."""
    out = np.zeros(tan.shape[:-2] + (3, 3))
    out[..., :2, :2] = tan
    return out


def effective_growth(g: GrowthFields, v0: ScalarField) -> GrowthFields:
    """Shallow-shell effective growth of the pulled-back metric.

    eps_eff = sym eps_g + 1/2 (grad v0 x grad v0)^*,
    kappa_eff = sym kappa_g - (hess v0)^*.
    """
    g.grid.require_same(v0.grid, "growth and v0")
    grid = g.grid
    dv = grad_values(grid, v0.data)
    outer = dv[..., :, None] * dv[..., None, :]
    eps_eff = sym_values(g.eps_g.data) + 0.5 * embed2(outer)
    kap_eff = sym_values(g.kappa_g.data) - embed2(hessian_values(grid, v0.data))
    return GrowthFields.from_arrays(grid, eps_eff, kap_eff)


def incompatibility(g: GrowthFields) -> tuple[VectorField2, float]:
    """Row-wise curl of (sym kappa_g)_tan and its L2 norm over the domain.

    The norm vanishes (to stencil accuracy) exactly when the tangential
    bending growth is a hessian.
    """
    grid = g.grid
    tan = _sym_tan(g.kappa_g)
    c = np.empty((grid.nx, grid.ny, 2))
    for i in range(2):
        c[..., i] = grid.d1(tan[..., i, 1], 0) - grid.d1(tan[..., i, 0], 1)
    norm = math.sqrt(max(grid.integrate_values(c[..., 0] ** 2 + c[..., 1] ** 2), 0.0))
    return VectorField2(grid, c), norm


def strain_pullback(sigma: MatrixField3, v0: ScalarField, gamma: float) -> MatrixField2:
    """Tangential pullback of an ambient bilinear form along x -> (x, gamma v0).

    out_ij = d_i phi . sigma d_j phi with d_i phi = (e_i, gamma d_i v0).
    """
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    sigma.grid.require_same(v0.grid, "form and v0")
    grid = sigma.grid
    dv = grad_values(grid, v0.data)
    tang = np.zeros((grid.nx, grid.ny, 3, 2))  # columns d_1 phi, d_2 phi
    tang[..., 0, 0] = 1.0
    tang[..., 1, 1] = 1.0
    tang[..., 2, :] = gamma * dv
    out = np.einsum("...ai,...ab,...bj->...ij", tang, sigma.data, tang)
    return MatrixField2(grid, out)


# -- trigonometric presets for the periodic test arena ------------------------

def _wavenumbers(grid: Grid2D) -> tuple[float, float]:
    a1, b1, a2, b2 = grid.domain
    return 2.0 * math.pi / (b1 - a1), 2.0 * math.pi / (b2 - a2)


def growth_preset(name: str, grid: Grid2D, amplitude: float = 1.0) -> GrowthFields:
    """Named growth fields used by the CLI and the verification suite.

    zero             no growth
    eps_sine         (eps)_11 = a sin(k1 x1) sin(k2 x2)
    kappa_sine       (kappa)_11 = a sin(k1 x1) sin(k2 x2); incompatible
    kappa_compatible (kappa)_tan = a hess(sin(k1 x1) sin(k2 x2)); curl-free
    omega_sine       (kappa)_tan = -a diag(sin(k1 x1), 0), so that
                     omega_g = a k1^2 sin(k1 x1) independently of nu
    """
    k1, k2 = _wavenumbers(grid)
    X1 = grid.X1 - grid.domain[0]
    X2 = grid.X2 - grid.domain[2]
    eps = np.zeros((grid.nx, grid.ny, 3, 3))
    kappa = np.zeros((grid.nx, grid.ny, 3, 3))
    a = float(amplitude)
    if name == "zero":
        pass
    elif name == "eps_sine":
        eps[..., 0, 0] = a * np.sin(k1 * X1) * np.sin(k2 * X2)
    elif name == "kappa_sine":
        kappa[..., 0, 0] = a * np.sin(k1 * X1) * np.sin(k2 * X2)
    elif name == "kappa_compatible":
        s1, c1 = np.sin(k1 * X1), np.cos(k1 * X1)
        s2, c2 = np.sin(k2 * X2), np.cos(k2 * X2)
        kappa[..., 0, 0] = -a * k1 * k1 * s1 * s2
        kappa[..., 0, 1] = a * k1 * k2 * c1 * c2
        kappa[..., 1, 0] = kappa[..., 0, 1]
        kappa[..., 1, 1] = -a * k2 * k2 * s1 * s2
    elif name == "omega_sine":
        kappa[..., 0, 0] = -a * np.sin(k1 * X1)
    else:
        raise ValueError(f"unknown growth preset {name!r}")
    return GrowthFields.from_arrays(grid, eps, kappa)


def omega_sine_reference(grid: Grid2D, amplitude: float = 1.0):
    """Exact deflection of the plain bending system driven by omega_sine.

    With lambda_g = 0 the pair (v, Phi) = (-a sin(k1 x1)/k1^2, 0) solves the
    flat prestrained system for any bending stiffness.
    """
    k1, _ = _wavenumbers(grid)
    X1 = grid.X1 - grid.domain[0]
    return ScalarField(grid, -(amplitude / (k1 * k1)) * np.sin(k1 * X1))


GROWTH_PRESETS = ("zero", "eps_sine", "kappa_sine", "kappa_compatible", "omega_sine")
