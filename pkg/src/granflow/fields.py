"""Staggered (MAC) grid fields and the discrete operators built on them.

Layout
------
* scalars (pressure, volume fraction) and symmetric tensors live at cell
  centers;
* velocity component ``k`` lives on the faces normal to axis ``k``
  (``cells[k] + 1`` values along that axis, boundary faces included).

Homogeneous Dirichlet data is imposed through ghost values: a ghost cell
mirrors the adjacent interior value with the opposite sign, so the field
vanishes on the wall. Tangential velocity and pressure both use this rule.

Arrays are indexed ``[i, j]`` (2D) or ``[i, j, k]`` (3D) with axis 0 = x.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache, reduce
from itertools import combinations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "SymTensorField",
    "MacOperators",
    "mac_operators",
    "sym_gradient",
    "deviator",
    "tensor_norm",
    "tensor_contract",
    "tensor_trace",
    "divergence",
    "gradient",
    "laplacian",
    "tensor_divergence",
    "integrate",
    "face_inner",
    "export_field",
    "read_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform axis-aligned box ``[0, extent[0]] x ... `` split in cells."""

    cells: tuple[int, ...]
    extent: tuple[float, ...] = None

    def __post_init__(self):
        cells = tuple(int(n) for n in self.cells)
        if len(cells) not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {len(cells)}")
        if any(n < 1 for n in cells):
            raise ValueError(f"cell counts must be positive, got {cells}")
        extent = (1.0,) * len(cells) if self.extent is None else self.extent
        extent = tuple(float(e) for e in extent)
        if len(extent) != len(cells):
            raise ValueError("extent and cells have different lengths")
        if any(not np.isfinite(e) or e <= 0 for e in extent):
            raise ValueError(f"extents must be positive, got {extent}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "extent", extent)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.extent, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    def face_shape(self, axis: int) -> tuple[int, ...]:
        shape = list(self.cells)
        shape[axis] += 1
        return tuple(shape)

    @property
    def tensor_components(self) -> list[tuple[int, int]]:
        """Independent (k, l) pairs: diagonal entries first, then k < l."""
        diag = [(k, k) for k in range(self.dim)]
        return diag + list(combinations(range(self.dim), 2))

    def cell_centers(self) -> list[np.ndarray]:
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def face_centers(self, axis: int) -> list[np.ndarray]:
        axes = []
        for a, (n, h) in enumerate(zip(self.cells, self.spacing)):
            if a == axis:
                axes.append(np.arange(n + 1) * h)
            else:
                axes.append((np.arange(n) + 0.5) * h)
        return np.meshgrid(*axes, indexing="ij")

    def boundary_face_mask(self, axis: int) -> np.ndarray:
        mask = np.zeros(self.face_shape(axis), dtype=bool)
        idx = [slice(None)] * self.dim
        idx[axis] = 0
        mask[tuple(idx)] = True
        idx[axis] = -1
        mask[tuple(idx)] = True
        return mask


def _check_grid(a: Grid, b: Grid):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.cells:
            raise ValueError(
                f"scalar field shape {self.values.shape} does not match "
                f"grid cells {self.grid.cells}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.cells))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(*grid.cell_centers()), grid.cells).copy())

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """One array per component, on the faces normal to that component."""

    grid: Grid
    components: tuple

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        if len(comps) != self.grid.dim:
            raise ValueError(
                f"vector field has {len(comps)} components on a "
                f"{self.grid.dim}D grid"
            )
        for k, c in enumerate(comps):
            if c.shape != self.grid.face_shape(k):
                raise ValueError(
                    f"component {k} shape {c.shape} != {self.grid.face_shape(k)}"
                )
        self.components = comps

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, tuple(np.zeros(grid.face_shape(k)) for k in range(grid.dim)))

    @classmethod
    def from_function(cls, grid: Grid, fn, *, enforce_bc: bool = False) -> "VectorField":
        """Sample ``fn(*coords) -> sequence of components`` at face centers."""
        comps = []
        for k in range(grid.dim):
            coords = grid.face_centers(k)
            value = np.broadcast_to(fn(*coords)[k], grid.face_shape(k)).copy()
            if enforce_bc:
                value[grid.boundary_face_mask(k)] = 0.0
            comps.append(value)
        return cls(grid, tuple(comps))

    def copy(self) -> "VectorField":
        return VectorField(self.grid, tuple(c.copy() for c in self.components))

    def flat(self) -> np.ndarray:
        return np.concatenate([c.ravel() for c in self.components])

    def interior(self) -> np.ndarray:
        """Concatenated values on interior faces (the Dirichlet unknowns)."""
        parts = []
        for k, c in enumerate(self.components):
            parts.append(np.take(c, np.arange(1, c.shape[k] - 1), axis=k).ravel())
        return np.concatenate(parts)

    @classmethod
    def from_interior(cls, grid: Grid, vec: np.ndarray) -> "VectorField":
        comps, start = [], 0
        for k in range(grid.dim):
            shape = list(grid.face_shape(k))
            inner = list(shape)
            inner[k] -= 2
            size = int(np.prod(inner))
            full = np.zeros(shape)
            idx = [slice(None)] * grid.dim
            idx[k] = slice(1, shape[k] - 1)
            full[tuple(idx)] = vec[start:start + size].reshape(inner)
            comps.append(full)
            start += size
        return cls(grid, tuple(comps))


@dataclass
class SymTensorField:
    """Independent components stacked along axis 0 (see Grid.tensor_components)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        ncomp = len(self.grid.tensor_components)
        if self.values.shape != (ncomp,) + self.grid.cells:
            raise ValueError(
                f"tensor field shape {self.values.shape} != "
                f"{(ncomp,) + self.grid.cells}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "SymTensorField":
        return cls(grid, np.zeros((len(grid.tensor_components),) + grid.cells))

    @classmethod
    def from_matrix(cls, grid: Grid, matrix) -> "SymTensorField":
        """Build a uniform field from a constant dim x dim (symmetric) matrix."""
        m = np.asarray(matrix, dtype=float)
        vals = [np.full(grid.cells, m[k, l]) for k, l in grid.tensor_components]
        return cls(grid, np.stack(vals))

    def component(self, k: int, l: int) -> np.ndarray:
        k, l = min(k, l), max(k, l)
        return self.values[self.grid.tensor_components.index((k, l))]


def contraction_weights(dim: int) -> np.ndarray:
    """Multiplicity of each stored component in A:B (off-diagonals count twice)."""
    n_off = dim * (dim - 1) // 2
    return np.array([1.0] * dim + [2.0] * n_off)


# ---------------------------------------------------------------------------
# Array-level stencils

def _take(a, start, stop, axis):
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    return a[tuple(idx)]


def _face_to_cell_avg(u, axis):
    return 0.5 * (_take(u, 0, -1, axis) + _take(u, 1, None, axis))


def _centered_diff_dirichlet(v, axis, h):
    """(v[j+1] - v[j-1]) / 2h with odd reflection at both walls."""
    lo = -_take(v, 0, 1, axis)
    hi = -_take(v, -1, None, axis)
    padded = np.concatenate([lo, v, hi], axis=axis)
    return (_take(padded, 2, None, axis) - _take(padded, 0, -2, axis)) / (2.0 * h)


def _sym_gradient_values(grid: Grid, comps) -> np.ndarray:
    h = grid.spacing
    out = []
    for k, l in grid.tensor_components:
        if k == l:
            out.append(np.diff(comps[k], axis=k) / h[k])
        else:
            dl_uk = _centered_diff_dirichlet(_face_to_cell_avg(comps[k], k), l, h[l])
            dk_ul = _centered_diff_dirichlet(_face_to_cell_avg(comps[l], l), k, h[k])
            out.append(0.5 * (dl_uk + dk_ul))
    return np.stack(out)


# ---------------------------------------------------------------------------
# Field-level operators

def sym_gradient(u: VectorField) -> SymTensorField:
    """Symmetric velocity gradient ``Du = (grad u + grad u^T) / 2`` at cell centers.

    Diagonal entries are the compact face differences; off-diagonal entries
    are centered differences of face-averaged components, using the wall
    ghosts for the cells next to the boundary.
    """
    if len(u.components) != u.grid.dim:
        raise ValueError("dimension mismatch between field and grid")
    return SymTensorField(u.grid, _sym_gradient_values(u.grid, u.components))


def tensor_trace(A: SymTensorField) -> ScalarField:
    return ScalarField(A.grid, A.values[: A.grid.dim].sum(axis=0))


def deviator(D: SymTensorField, divu: ScalarField = None, dim: int = None) -> SymTensorField:
    """``S = D - (1/dim) * divu * I``.

    ``divu`` must be the trace of ``D`` (it is computed from ``D`` when
    omitted). The coefficient ``1/dim`` makes the decomposition
    ``|D|^2 = |S|^2 + (div u)^2 / (2 dim)`` exact in any dimension.
    """
    grid = D.grid
    dim = grid.dim if dim is None else dim
    if dim != grid.dim:
        raise ValueError(f"dim {dim} does not match grid dimension {grid.dim}")
    tr = tensor_trace(D).values if divu is None else divu.values
    if tr.shape != grid.cells:
        raise ValueError("divu shape mismatch")
    vals = D.values.copy()
    vals[:dim] -= tr / dim
    return SymTensorField(grid, vals)


def tensor_contract(A: SymTensorField, B: SymTensorField) -> ScalarField:
    """Pointwise ``A:B = tr(A^T B)``."""
    _check_grid(A.grid, B.grid)
    w = contraction_weights(A.grid.dim).reshape((-1,) + (1,) * A.grid.dim)
    return ScalarField(A.grid, (w * A.values * B.values).sum(axis=0))


def tensor_norm(A: SymTensorField) -> ScalarField:
    """Pointwise ``|A| = sqrt(A:A / 2)``."""
    return ScalarField(A.grid, np.sqrt(0.5 * tensor_contract(A, A).values))


def divergence(u: VectorField) -> ScalarField:
    h = u.grid.spacing
    total = np.zeros(u.grid.cells)
    for k, c in enumerate(u.components):
        total = total + np.diff(c, axis=k) / h[k]
    return ScalarField(u.grid, total)


def gradient(p: ScalarField) -> VectorField:
    """Face gradient of a cell scalar with ``p = 0`` imposed on the walls.

    Boundary faces carry the one-sided value ``(p_in - p_ghost)/h``.
    """
    grid, h = p.grid, p.grid.spacing
    comps = []
    for k in range(grid.dim):
        lo = -_take(p.values, 0, 1, k)
        hi = -_take(p.values, -1, None, k)
        padded = np.concatenate([lo, p.values, hi], axis=k)
        comps.append(np.diff(padded, axis=k) / h[k])
    return VectorField(grid, tuple(comps))


def laplacian(p: ScalarField) -> ScalarField:
    """``divergence(gradient(p))`` with homogeneous Dirichlet data."""
    return divergence(gradient(p))


def tensor_divergence(sigma: SymTensorField) -> VectorField:
    """Discrete ``div sigma`` on interior faces, the negative adjoint of Du.

    Boundary faces are set to zero: they are not part of the homogeneous
    Dirichlet test space, so the adjoint defines nothing there.
    """
    grid = sigma.grid
    ops = mac_operators(grid)
    w = np.repeat(contraction_weights(grid.dim), grid.n_cells)
    interior = -(ops.G.T @ (w * sigma.values.ravel()))
    return VectorField.from_interior(grid, interior)


def integrate(f: ScalarField) -> float:
    return float(f.values.sum() * f.grid.cell_volume)


def face_weights(grid: Grid, axis: int) -> np.ndarray:
    """Quadrature weight of each face: a cell volume, halved on the walls."""
    w = np.full(grid.face_shape(axis), grid.cell_volume)
    w[grid.boundary_face_mask(axis)] *= 0.5
    return w


def face_inner(u: VectorField, v: VectorField) -> float:
    _check_grid(u.grid, v.grid)
    return float(sum(
        (face_weights(u.grid, k) * a * b).sum()
        for k, (a, b) in enumerate(zip(u.components, v.components))
    ))


# ---------------------------------------------------------------------------
# Sparse operator set used by the implicit solvers

def _d1(n, h):
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1)) / h


def _a1(n):
    return sp.diags([np.full(n, 0.5), np.full(n, 0.5)], [0, 1], shape=(n, n + 1))


def _c1(n, h):
    m = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n)).tolil()
    m[0, 0] += 1.0
    m[n - 1, n - 1] -= 1.0
    return m.tocsr() / (2.0 * h)


def _g1(n, h):
    m = sp.diags([np.ones(n), -np.ones(n)], [0, -1], shape=(n + 1, n)).tolil()
    m[0, 0] = 2.0
    m[n, n - 1] = -2.0
    return m.tocsr() / h


def _interior1(n):
    return sp.eye(n - 1, n + 1, k=1, format="csr")


def _kron(mats):
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


@dataclass(frozen=True)
class MacOperators:
    """Sparse matrices acting on raveled (C-order) cell/face arrays.

    ``G`` maps interior-face velocity unknowns to the stacked tensor
    components of ``Du``; ``Div`` maps them to cell divergences and
    ``-Div.T`` is the face gradient on interior faces. ``Lap`` is the
    Dirichlet cell Laplacian (``Div_full @ Grad_full``).
    """

    grid: Grid
    G: sp.csr_matrix
    Div: sp.csr_matrix
    Grad_full: sp.csr_matrix
    Lap: sp.csr_matrix
    embed: sp.csr_matrix
    grad_weights: np.ndarray
    n_u: int = field(default=0)


@lru_cache(maxsize=32)
def mac_operators(grid: Grid) -> MacOperators:
    n, h, dim = grid.cells, grid.spacing, grid.dim
    eye = [sp.eye(m, format="csr") for m in n]

    def axis_ops(k, special):
        return [special.get(a, eye[a]) for a in range(dim)]

    face_sizes = [int(np.prod(grid.face_shape(k))) for k in range(dim)]
    rows = []
    for k, l in grid.tensor_components:
        blocks = [None] * dim
        if k == l:
            blocks[k] = _kron(axis_ops(k, {k: _d1(n[k], h[k])}))
        else:
            blocks[k] = 0.5 * _kron(axis_ops(k, {k: _a1(n[k]), l: _c1(n[l], h[l])}))
            blocks[l] = 0.5 * _kron(axis_ops(l, {l: _a1(n[l]), k: _c1(n[k], h[k])}))
        for m in range(dim):
            if blocks[m] is None:
                blocks[m] = sp.csr_matrix((grid.n_cells, face_sizes[m]))
        rows.append(blocks)
    G_full = sp.bmat(rows, format="csr")

    embed = sp.block_diag(
        [_kron(axis_ops(k, {k: _interior1(n[k]).T})) for k in range(dim)], format="csr"
    )
    Div_full = sp.hstack(
        [_kron(axis_ops(k, {k: _d1(n[k], h[k])})) for k in range(dim)], format="csr"
    )
    Grad_full = sp.vstack(
        [_kron(axis_ops(k, {k: _g1(n[k], h[k])})) for k in range(dim)], format="csr"
    )
    G = (G_full @ embed).tocsr()
    Div = (Div_full @ embed).tocsr()
    Lap = (Div_full @ Grad_full).tocsr()
    grad_w = np.concatenate([face_weights(grid, k).ravel() for k in range(dim)])
    return MacOperators(grid, G, Div, Grad_full, Lap, embed, grad_w, embed.shape[1])


# ---------------------------------------------------------------------------
# Snapshot export

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_field(f, path) -> None:
    """Write a field as plain text, one record per storage location.

    Header: ``# kind=<scalar|vector|tensor> dim=.. cells=.. spacing=.. extent=..``.
    Records: indices, coordinates, then values (17 significant digits); for
    vector fields each record additionally starts with the component index.
    """
    grid = f.grid
    header = (
        f"# kind={_kind(f)} dim={grid.dim} "
        f"cells={','.join(map(str, grid.cells))} "
        f"spacing={','.join(_fmt(h) for h in grid.spacing)} "
        f"extent={','.join(_fmt(e) for e in grid.extent)}"
    )
    lines = [header]
    if isinstance(f, VectorField):
        for k, comp in enumerate(f.components):
            coords = grid.face_centers(k)
            for idx in np.ndindex(comp.shape):
                lines.append(" ".join(
                    [str(k)] + [str(i) for i in idx]
                    + [_fmt(c[idx]) for c in coords] + [_fmt(comp[idx])]
                ))
    else:
        coords = grid.cell_centers()
        vals = f.values if isinstance(f, ScalarField) else f.values
        for idx in np.ndindex(grid.cells):
            if isinstance(f, ScalarField):
                data = [vals[idx]]
            else:
                data = list(vals[(slice(None),) + idx])
            lines.append(" ".join(
                [str(i) for i in idx] + [_fmt(c[idx]) for c in coords]
                + [_fmt(v) for v in data]
            ))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _kind(f) -> str:
    if isinstance(f, ScalarField):
        return "scalar"
    if isinstance(f, VectorField):
        return "vector"
    if isinstance(f, SymTensorField):
        return "tensor"
    raise TypeError(f"cannot export {type(f).__name__}")


def read_field(path):
    """Inverse of :func:`export_field`."""
    with open(path) as fh:
        header = fh.readline()
        rows = [line.split() for line in fh if line.strip()]
    meta = dict(item.split("=", 1) for item in header.lstrip("#").split())
    cells = tuple(int(c) for c in meta["cells"].split(","))
    extent = tuple(float(e) for e in meta["extent"].split(","))
    grid = Grid(cells, extent)
    dim, kind = grid.dim, meta["kind"]
    if kind == "vector":
        comps = [np.zeros(grid.face_shape(k)) for k in range(dim)]
        for row in rows:
            k = int(row[0])
            idx = tuple(int(i) for i in row[1:1 + dim])
            comps[k][idx] = float(row[-1])
        return VectorField(grid, tuple(comps))
    if kind == "scalar":
        vals = np.zeros(cells)
        for row in rows:
            vals[tuple(int(i) for i in row[:dim])] = float(row[-1])
        return ScalarField(grid, vals)
    ncomp = len(grid.tensor_components)
    vals = np.zeros((ncomp,) + cells)
    for row in rows:
        idx = tuple(int(i) for i in row[:dim])
        vals[(slice(None),) + idx] = [float(v) for v in row[2 * dim:]]
    return SymTensorField(grid, vals)
