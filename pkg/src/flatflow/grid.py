"""Uniform Cartesian grids, scalar fields and second-order stencils.

Every other module works on the values stored here.  Arrays use ``ij``
indexing: axis ``k`` of ``ScalarField.values`` is the coordinate ``x_{k+1}``
and node ``i`` sits at ``-extent + i * spacing``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUPPORTED_DIMS = (2, 3)


class GridError(ValueError):
    """Invalid grid construction or out-of-stencil access."""


@dataclass(frozen=True)
class Grid:
    dim: int
    extent: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in SUPPORTED_DIMS:
            raise GridError(f"unsupported dimension {self.dim}; expected one of {SUPPORTED_DIMS}")
        if self.points_per_axis % 2 == 0:
            raise GridError(f"points_per_axis must be odd, got {self.points_per_axis}")
        if self.points_per_axis < 17:
            raise GridError(f"points_per_axis must be >= 17, got {self.points_per_axis}")
        if not self.extent > 0:
            raise GridError(f"extent must be positive, got {self.extent}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def center_index(self) -> int:
        return self.points_per_axis // 2

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.points_per_axis)

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dim,)``."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.coordinates() ** 2, axis=-1))

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dim] = True
        return mask

    def position(self, index) -> np.ndarray:
        return -self.extent + np.asarray(index, dtype=float) * self.spacing


def make_grid(dim: int, extent: float, points_per_axis: int) -> Grid:
    return Grid(int(dim), float(extent), int(points_per_axis))


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and Hessian at a point.

    The fields may carry leading batch dimensions: ``value`` has shape
    ``(...)``, ``gradient`` ``(..., n)`` and ``hessian`` ``(..., n, n)``.
    """

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))
        object.__setattr__(self, "gradient", np.asarray(self.gradient, dtype=float))
        object.__setattr__(self, "hessian", np.asarray(self.hessian, dtype=float))

    @property
    def dim(self) -> int:
        return self.gradient.shape[-1]

    def rotated(self, q: np.ndarray) -> "Jet2":
        """Jet of ``f(Q y)``: gradient ``Q^T g`` and Hessian ``Q^T H Q``."""
        q = np.asarray(q, dtype=float)
        grad = np.einsum("ji,...j->...i", q, self.gradient)
        hess = np.einsum("ki,...kl,lj->...ij", q, self.hessian, q)
        return Jet2(self.value, grad, hess)


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("field contains non-finite values")
        if self.time < 0:
            raise GridError("time must be non-negative")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.time, dict(self.meta))

    def with_values(self, values: np.ndarray, time: float | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.time if time is None else time)


def _shifted(values: np.ndarray, offsets: dict[int, int]) -> np.ndarray:
    """Interior view of ``values`` shifted by ``offsets[axis]`` in {-1, 0, 1}."""
    idx = []
    for ax in range(values.ndim):
        o = offsets.get(ax, 0)
        stop = values.shape[ax] - 1 + o
        idx.append(slice(1 + o, stop))
    return values[tuple(idx)]


def interior_jets(field: ScalarField) -> Jet2:
    """Central-difference jets at every interior node (batched ``Jet2``).

    Gradient and diagonal Hessian use 3-point stencils, mixed entries the
    4-point cross stencil.  The batch shape is ``(N-2,) * dim``.
    """
    return stencil_jets(field.values, field.grid.spacing)


def stencil_jets(values: np.ndarray, h: float) -> Jet2:
    n = values.ndim
    center = _shifted(values, {})
    grad = np.empty(center.shape + (n,))
    hess = np.empty(center.shape + (n, n))
    for a in range(n):
        plus = _shifted(values, {a: 1})
        minus = _shifted(values, {a: -1})
        grad[..., a] = (plus - minus) / (2.0 * h)
        hess[..., a, a] = (plus - 2.0 * center + minus) / (h * h)
        for b in range(a + 1, n):
            pp = _shifted(values, {a: 1, b: 1})
            pm = _shifted(values, {a: 1, b: -1})
            mp = _shifted(values, {a: -1, b: 1})
            mm = _shifted(values, {a: -1, b: -1})
            hab = (pp - pm - mp + mm) / (4.0 * h * h)
            hess[..., a, b] = hab
            hess[..., b, a] = hab
    return Jet2(center.copy(), grad, hess)


def jet2_at(field: ScalarField, node) -> Jet2:
    """Central-difference jet at a single node at least one cell inside."""
    grid = field.grid
    node = tuple(int(i) for i in node)
    if len(node) != grid.dim:
        raise GridError(f"node {node} has wrong dimension for {grid.dim}-d grid")
    if any(i < 1 or i > grid.points_per_axis - 2 for i in node):
        raise GridError(f"node {node} is outside the stencil region (needs one cell of margin)")
    lo = tuple(slice(i - 1, i + 2) for i in node)
    block = field.values[lo]
    jet = stencil_jets(block, grid.spacing)
    zero = (0,) * grid.dim
    return Jet2(jet.value[zero], jet.gradient[zero], jet.hessian[zero])


def extract_band(field: ScalarField, lo: float, hi: float) -> np.ndarray:
    """Interior node indices with ``lo <= value <= hi``, shape ``(M, dim)``.

    Indices are returned in lexicographic order.
    """
    if not lo < hi:
        raise GridError(f"band requires lo < hi, got [{lo}, {hi}]")
    mask = (field.values >= lo) & (field.values <= hi) & field.grid.interior_mask()
    return np.argwhere(mask)


def write_field_csv(field: ScalarField, path) -> None:
    """Write ``field`` as CSV: a ``# dim,n_axis,extent,time`` header line,
    a commented line with those values, then ``i1,...,in,value`` per node."""
    grid = field.grid
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# dim,n_axis,extent,time\n")
        fh.write(f"# {grid.dim},{grid.points_per_axis},{grid.extent!r},{float(field.time)!r}\n")
        vals = field.values.reshape(-1)
        # repr keeps the round trip exact
        lines = [",".join(map(str, row)) + "," + repr(float(v)) for row, v in zip(idx.tolist(), vals.tolist())]
        fh.write("\n".join(lines))
        fh.write("\n")


def read_field_csv(path) -> ScalarField:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        second = fh.readline()
        if not first.startswith("#") or not second.startswith("#"):
            raise GridError(f"{path}: missing field header")
        dim_s, n_s, ext_s, time_s = second.lstrip("#").strip().split(",")
        grid = make_grid(int(dim_s), float(ext_s), int(n_s))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[0] != grid.points_per_axis**grid.dim:
        raise GridError(f"{path}: expected {grid.points_per_axis ** grid.dim} rows, got {data.shape[0]}")
    values = np.empty(grid.shape)
    index = tuple(data[:, k].astype(int) for k in range(grid.dim))
    values[index] = data[:, -1]
    return ScalarField(grid, values, float(time_s))
