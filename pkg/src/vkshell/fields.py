"""Uniform rectangular grids and the finite-difference calculus on them.

Everything downstream (growth tensors, plate energies, the von Karman
solver, the 3d shell quadrature) consumes the containers and operators
defined here.  The design is deliberately plain:

* tensor-product grid on a rectangle, either periodic (stencils wrap) or
  "dirichlet-ghost" (one ghost layer filled by cubic extrapolation of the
  interior, which collapses to the usual one-sided second-order rows for
  first AND second derivatives; quadratic extrapolation would drop the
  boundary rows of second derivatives to first order),
* centered second-order stencils for first and second derivatives, with
  the mixed derivative as the 4-point centered cross,
* the bilaplacian is the laplacian applied twice, never a separate stencil,
* node quadrature matched to the boundary mode (rectangle rule when
  periodic, trapezoid otherwise).

All field data is immutable after construction; operators allocate fresh
outputs, so fields can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

PERIODIC = "periodic"
DIRICHLET = "dirichlet-ghost"
_BC_MODES = (PERIODIC, DIRICHLET)

SYM_TOL = 1e-12


class SizingError(ValueError):
    """Grid too small for the stencils (or otherwise mis-sized)."""


class GridMismatchError(ValueError):
    """Operands that must share a grid do not."""


def _d1_matrix(n: int, h: float, bc: str) -> sp.csr_matrix:
    """1d centered first derivative; one-sided 2nd-order rows in ghost mode."""
    rows, cols, vals = [], [], []
    c = 1.0 / (2.0 * h)
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-c, c]
    if bc == PERIODIC:
        rows += [0, 0, n - 1, n - 1]
        cols += [n - 1, 1, n - 2, 0]
        vals += [-c, c, -c, c]
    else:
        # ghost g = 4 f0 - 6 f1 + 4 f2 - f3  =>  (f1 - g)/(2h)
        rows += [0, 0, 0, 0]
        cols += [0, 1, 2, 3]
        vals += [-4.0 * c, 7.0 * c, -4.0 * c, c]
        rows += [n - 1, n - 1, n - 1, n - 1]
        cols += [n - 1, n - 2, n - 3, n - 4]
        vals += [4.0 * c, -7.0 * c, 4.0 * c, -c]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _d2_matrix(n: int, h: float, bc: str) -> sp.csr_matrix:
    """1d centered second derivative; quadratic-ghost rows at the ends."""
    rows, cols, vals = [], [], []
    c = 1.0 / (h * h)
    for i in range(1, n - 1):
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [c, -2.0 * c, c]
    if bc == PERIODIC:
        rows += [0, 0, 0, n - 1, n - 1, n - 1]
        cols += [n - 1, 0, 1, n - 2, n - 1, 0]
        vals += [c, -2.0 * c, c, c, -2.0 * c, c]
    else:
        # ghost g = 4 f0 - 6 f1 + 4 f2 - f3  =>  (g - 2 f0 + f1)/h^2
        rows += [0, 0, 0, 0]
        cols += [0, 1, 2, 3]
        vals += [2.0 * c, -5.0 * c, 4.0 * c, -c]
        rows += [n - 1, n - 1, n - 1, n - 1]
        cols += [n - 1, n - 2, n - 3, n - 4]
        vals += [2.0 * c, -5.0 * c, 4.0 * c, -c]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class Grid2D:
    """Uniform tensor-product sampling of a rectangle [a1,b1] x [a2,b2].

    In periodic mode the right/top edges are identified with the left/bottom
    ones, so the step is (b-a)/n and the last sample sits one step short of
    b.  In dirichlet-ghost mode the samples include both endpoints.
    """

    def __init__(self, nx: int, ny: int, domain=(0.0, 1.0, 0.0, 1.0), bc: str = DIRICHLET):
        if bc not in _BC_MODES:
            raise ValueError(f"unknown boundary mode {bc!r}; expected one of {_BC_MODES}")
        if nx < 8 or ny < 8:
            raise SizingError(f"grid must be at least 8x8, got {nx}x{ny}")
        a1, b1, a2, b2 = map(float, domain)
        if not (b1 > a1 and b2 > a2):
            raise ValueError(f"degenerate domain {domain}")
        self.nx, self.ny = int(nx), int(ny)
        self.domain = (a1, b1, a2, b2)
        self.bc = bc
        if bc == PERIODIC:
            self.dx = (b1 - a1) / nx
            self.dy = (b2 - a2) / ny
            self.x1 = a1 + self.dx * np.arange(nx)
            self.x2 = a2 + self.dy * np.arange(ny)
        else:
            self.dx = (b1 - a1) / (nx - 1)
            self.dy = (b2 - a2) / (ny - 1)
            self.x1 = np.linspace(a1, b1, nx)
            self.x2 = np.linspace(a2, b2, ny)
        self.X1, self.X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        self.X1.setflags(write=False)
        self.X2.setflags(write=False)
        self._mats: dict[tuple, sp.csr_matrix] = {}
        self._quad: np.ndarray | None = None

    # -- identity ---------------------------------------------------------

    def _key(self):
        return (self.nx, self.ny, self.domain, self.bc)

    def __eq__(self, other):
        return isinstance(other, Grid2D) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"Grid2D({self.nx}x{self.ny}, {self.domain}, {self.bc})"

    @property
    def periodic(self) -> bool:
        return self.bc == PERIODIC

    @property
    def area(self) -> float:
        a1, b1, a2, b2 = self.domain
        return (b1 - a1) * (b2 - a2)

    def require_same(self, other: "Grid2D", what: str = "operands"):
        if self != other:
            raise GridMismatchError(f"{what} live on different grids: {self} vs {other}")

    # -- stencil machinery --------------------------------------------------

    def _mat(self, axis: int, order: int, adjoint: bool = False) -> sp.csr_matrix:
        key = (axis, order, adjoint)
        m = self._mats.get(key)
        if m is None:
            n = self.nx if axis == 0 else self.ny
            h = self.dx if axis == 0 else self.dy
            m = _d1_matrix(n, h, self.bc) if order == 1 else _d2_matrix(n, h, self.bc)
            if adjoint:
                m = m.T.tocsr()
            self._mats[key] = m
        return m

    def _apply(self, m: sp.csr_matrix, a: np.ndarray, axis: int) -> np.ndarray:
        if axis == 0:
            return m @ a
        return (m @ a.T).T

    def d1(self, a: np.ndarray, axis: int) -> np.ndarray:
        return self._apply(self._mat(axis, 1), a, axis)

    def d2(self, a: np.ndarray, axis: int) -> np.ndarray:
        return self._apply(self._mat(axis, 2), a, axis)

    def dcross(self, a: np.ndarray) -> np.ndarray:
        """Mixed second derivative: the 4-point centered cross d1x(d1y(.))."""
        return self.d1(self.d1(a, 1), 0)

    def lap(self, a: np.ndarray) -> np.ndarray:
        return self.d2(a, 0) + self.d2(a, 1)

    def bilap(self, a: np.ndarray) -> np.ndarray:
        return self.lap(self.lap(a))

    # exact transposes of the discrete operators (needed by analytic gradients)

    def d1_t(self, a: np.ndarray, axis: int) -> np.ndarray:
        return self._apply(self._mat(axis, 1, adjoint=True), a, axis)

    def d2_t(self, a: np.ndarray, axis: int) -> np.ndarray:
        return self._apply(self._mat(axis, 2, adjoint=True), a, axis)

    def dcross_t(self, a: np.ndarray) -> np.ndarray:
        return self.d1_t(self.d1_t(a, 0), 1)

    # -- quadrature ---------------------------------------------------------

    @property
    def quad_weights(self) -> np.ndarray:
        """Node weights: rectangle rule (periodic) or trapezoid (ghost mode)."""
        if self._quad is None:
            if self.periodic:
                w = np.full((self.nx, self.ny), self.dx * self.dy)
            else:
                wx = np.ones(self.nx)
                wy = np.ones(self.ny)
                wx[0] = wx[-1] = 0.5
                wy[0] = wy[-1] = 0.5
                w = self.dx * self.dy * np.outer(wx, wy)
            w.setflags(write=False)
            self._quad = w
        return self._quad

    def integrate_values(self, a: np.ndarray) -> float:
        return float(np.sum(self.quad_weights * a))

    def norm_l2(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.integrate_values(a * a), 0.0)))


# -- field containers --------------------------------------------------------

def _freeze(a: np.ndarray, shape_suffix: tuple, grid: Grid2D) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    want = (grid.nx, grid.ny) + shape_suffix
    if arr.shape != want:
        raise GridMismatchError(f"data shape {arr.shape} does not match grid shape {want}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field samples must all be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid2D
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data, (), self.grid))

    @classmethod
    def sample(cls, grid: Grid2D, fn) -> "ScalarField":
        return cls(grid, fn(grid.X1, grid.X2))

    @classmethod
    def zeros(cls, grid: Grid2D) -> "ScalarField":
        return cls(grid, np.zeros((grid.nx, grid.ny)))


@dataclass(frozen=True, eq=False)
class VectorField2:
    grid: Grid2D
    data: np.ndarray  # (nx, ny, 2)

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data, (2,), self.grid))

    @classmethod
    def zeros(cls, grid: Grid2D) -> "VectorField2":
        return cls(grid, np.zeros((grid.nx, grid.ny, 2)))

    def component(self, i: int) -> np.ndarray:
        return self.data[..., i]


@dataclass(frozen=True, eq=False)
class VectorField3:
    grid: Grid2D
    data: np.ndarray  # (nx, ny, 3)

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data, (3,), self.grid))


@dataclass(frozen=True, eq=False)
class MatrixField2:
    grid: Grid2D
    data: np.ndarray  # (nx, ny, 2, 2)
    symmetric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data, (2, 2), self.grid))
        if self.symmetric:
            skew = np.abs(self.data[..., 0, 1] - self.data[..., 1, 0])
            scale = 1.0 + np.linalg.norm(self.data, axis=(-2, -1))
            if np.any(skew > SYM_TOL * scale):
                raise ValueError("matrix field flagged symmetric is not")

    @classmethod
    def zeros(cls, grid: Grid2D) -> "MatrixField2":
        return cls(grid, np.zeros((grid.nx, grid.ny, 2, 2)), symmetric=True)


@dataclass(frozen=True, eq=False)
class MatrixField3:
    grid: Grid2D
    data: np.ndarray  # (nx, ny, 3, 3)

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data, (3, 3), self.grid))

    @classmethod
    def zeros(cls, grid: Grid2D) -> "MatrixField3":
        return cls(grid, np.zeros((grid.nx, grid.ny, 3, 3)))


# -- differential operators ---------------------------------------------------

_DIFF_KINDS = ("grad", "hessian", "laplacian", "bilaplacian")


def apply_diff(f: ScalarField, kind: str):
    """Centered second-order derivative of a scalar field.

    kind is one of 'grad' | 'hessian' | 'laplacian' | 'bilaplacian'; the
    bilaplacian is exactly the laplacian stencil applied twice.
    """
    g = f.grid
    a = f.data
    if kind == "grad":
        return VectorField2(g, np.stack([g.d1(a, 0), g.d1(a, 1)], axis=-1))
    if kind == "hessian":
        hxx, hyy, hxy = g.d2(a, 0), g.d2(a, 1), g.dcross(a)
        h = np.empty((g.nx, g.ny, 2, 2))
        h[..., 0, 0] = hxx
        h[..., 0, 1] = hxy
        h[..., 1, 0] = hxy
        h[..., 1, 1] = hyy
        return MatrixField2(g, h, symmetric=True)
    if kind == "laplacian":
        return ScalarField(g, g.lap(a))
    if kind == "bilaplacian":
        return ScalarField(g, g.bilap(a))
    raise ValueError(f"unknown derivative kind {kind!r}; expected one of {_DIFF_KINDS}")


def curl_t_curl(B: MatrixField2) -> ScalarField:
    """curl^T curl B = d22 B11 + d11 B22 - d12 (B12 + B21)."""
    g = B.grid
    b = B.data
    out = g.d2(b[..., 0, 0], 1) + g.d2(b[..., 1, 1], 0) - g.dcross(b[..., 0, 1] + b[..., 1, 0])
    return ScalarField(g, out)


def div_t_div(B: MatrixField2) -> ScalarField:
    """div^T div B = d11 B11 + d22 B22 + d12 (B12 + B21)."""
    g = B.grid
    b = B.data
    out = g.d2(b[..., 0, 0], 0) + g.d2(b[..., 1, 1], 1) + g.dcross(b[..., 0, 1] + b[..., 1, 0])
    return ScalarField(g, out)


def cof2_values(b: np.ndarray) -> np.ndarray:
    """Pointwise cofactor of a stack of 2x2 matrices."""
    out = np.empty_like(b)
    out[..., 0, 0] = b[..., 1, 1]
    out[..., 0, 1] = -b[..., 1, 0]
    out[..., 1, 0] = -b[..., 0, 1]
    out[..., 1, 1] = b[..., 0, 0]
    return out


def det2_values(b: np.ndarray) -> np.ndarray:
    return b[..., 0, 0] * b[..., 1, 1] - b[..., 0, 1] * b[..., 1, 0]


def cof2(B: MatrixField2) -> MatrixField2:
    return MatrixField2(B.grid, cof2_values(B.data), symmetric=B.symmetric)


def det2(B: MatrixField2) -> ScalarField:
    return ScalarField(B.grid, det2_values(B.data))


def airy_bracket(v: ScalarField, phi: ScalarField) -> ScalarField:
    """Monge-Ampere bracket [v, phi] = cof(hess v) : hess phi.

    Symmetric in its arguments by construction; [v, v] = 2 det(hess v).
    """
    v.grid.require_same(phi.grid, "bracket arguments")
    g = v.grid
    a, b = v.data, phi.data
    out = (
        g.d2(a, 0) * g.d2(b, 1)
        + g.d2(a, 1) * g.d2(b, 0)
        - 2.0 * g.dcross(a) * g.dcross(b)
    )
    return ScalarField(g, out)


def integrate(f: ScalarField) -> float:
    return f.grid.integrate_values(f.data)


def norm_l2(f: ScalarField) -> float:
    return f.grid.norm_l2(f.data)


def norm_inf(f: ScalarField) -> float:
    return float(np.max(np.abs(f.data)))


def sym_values(b: np.ndarray) -> np.ndarray:
    return 0.5 * (b + np.swapaxes(b, -1, -2))


def grad_values(grid: Grid2D, a: np.ndarray) -> np.ndarray:
    return np.stack([grid.d1(a, 0), grid.d1(a, 1)], axis=-1)


def hessian_values(grid: Grid2D, a: np.ndarray) -> np.ndarray:
    hxx, hyy, hxy = grid.d2(a, 0), grid.d2(a, 1), grid.dcross(a)
    h = np.empty(a.shape + (2, 2))
    h[..., 0, 0] = hxx
    h[..., 0, 1] = hxy
    h[..., 1, 0] = hxy
    h[..., 1, 1] = hyy
    return h


def sym_grad_values(grid: Grid2D, w: np.ndarray) -> np.ndarray:
    """Symmetrized Jacobian of an in-plane displacement sampled as (nx,ny,2)."""
    j = np.empty(w.shape[:2] + (2, 2))
    for i in range(2):
        for k in range(2):
            j[..., i, k] = grid.d1(w[..., i], k)
    return sym_values(j)


# -- CSV serialization --------------------------------------------------------

_RANK_LABELS = {
    1: ["c11"],
    2: ["c11", "c12"],
    3: ["c11", "c12", "c13"],
    4: ["c11", "c12", "c21", "c22"],
    9: ["c11", "c12", "c13", "c21", "c22", "c23", "c31", "c32", "c33"],
}


def save_csv(fld, path) -> None:
    """Write a field as CSV: header x1,x2,c11[,...], row-major over nodes."""
    grid = fld.grid
    comps = fld.data.reshape(grid.nx, grid.ny, -1)
    k = comps.shape[-1]
    if k not in _RANK_LABELS:
        raise ValueError(f"unsupported component count {k}")
    header = ",".join(["x1", "x2"] + _RANK_LABELS[k])
    lines = [header]
    for i in range(grid.nx):
        for j in range(grid.ny):
            vals = [grid.x1[i], grid.x2[j]] + list(comps[i, j])
            lines.append(",".join(f"{v:.17g}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_csv(path, grid: Grid2D):
    """Read a field written by save_csv back onto the given grid."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[0] != grid.nx * grid.ny:
        raise GridMismatchError(f"{path}: {raw.shape[0]} rows, expected {grid.nx * grid.ny}")
    k = raw.shape[1] - 2
    comps = raw[:, 2:].reshape(grid.nx, grid.ny, k)
    if k == 1:
        return ScalarField(grid, comps[..., 0])
    if k == 2:
        return VectorField2(grid, comps)
    if k == 3:
        return VectorField3(grid, comps)
    if k == 4:
        return MatrixField2(grid, comps.reshape(grid.nx, grid.ny, 2, 2))
    if k == 9:
        return MatrixField3(grid, comps.reshape(grid.nx, grid.ny, 3, 3))
    raise ValueError(f"unsupported component count {k} in {path}")
