"""Regular grids, nodal fields, multilinear interpolation, and nested refinement.

Grids are axis-aligned, equidistant node lattices over a box in R^d with
d = 1..4.  Fields store one value per node in row-major (C) order, last axis
fastest, so flat indices match ``numpy.ravel_multi_index`` on the grid shape.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

DEFAULT_NODE_CAP = 20_000_000

FIELD_FLOAT_FORMAT = "%.17g"


class GridError(ValueError):
    """Invalid grid construction or an operation across mismatched grids."""


class RegularGrid:
    """Equidistant node lattice on a box.

    Node k on axis i sits exactly at ``lower[i] + k * spacing[i]`` with
    ``spacing[i] = (upper[i] - lower[i]) / (nodes_per_axis[i] - 1)``.
    """

    def __init__(self, lower, upper, nodes_per_axis, node_cap=DEFAULT_NODE_CAP):
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        nodes = tuple(int(n) for n in np.atleast_1d(nodes_per_axis))
        if not (len(lower) == len(upper) == len(nodes)):
            raise GridError("lower, upper and nodes_per_axis must have equal length")
        if not 1 <= len(lower) <= 4:
            raise GridError(f"dimension must be 1..4, got {len(lower)}")
        for lo, hi in zip(lower, upper):
            if not lo < hi:
                raise GridError(f"need lower < upper on every axis, got [{lo}, {hi}]")
        for n in nodes:
            if n < 2:
                raise GridError("need at least 2 nodes per axis")
        total = 1
        for n in nodes:
            total *= n
        if total > node_cap:
            raise GridError(f"grid with {total} nodes exceeds the cap of {node_cap}")

        self.dim = len(lower)
        self.lower = lower
        self.upper = upper
        self.nodes_per_axis = nodes
        self.spacing = tuple(
            (hi - lo) / (n - 1) for lo, hi, n in zip(lower, upper, nodes)
        )
        self.shape = nodes
        self.num_nodes = total
        # Flat strides for row-major node numbering, last axis fastest.
        strides = [1] * self.dim
        for i in range(self.dim - 2, -1, -1):
            strides[i] = strides[i + 1] * nodes[i + 1]
        self.strides = tuple(strides)
        # Coordinate of the last node per axis; this is the effective closed-box
        # face used by cell location (it can differ from `upper` by one ulp).
        self.upper_node = tuple(
            lo + (n - 1) * h for lo, h, n in zip(lower, self.spacing, nodes)
        )
        self._nodes = None
        self._boundary = None

    def axis_coords(self, axis):
        """Node coordinates along one axis, exactly lower + k * spacing."""
        lo = self.lower[axis]
        h = self.spacing[axis]
        return lo + h * np.arange(self.nodes_per_axis[axis], dtype=float)

    def nodes(self):
        """All node coordinates as an (num_nodes, dim) array in flat order."""
        if self._nodes is None:
            axes = [self.axis_coords(i) for i in range(self.dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            self._nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return self._nodes

    def boundary_mask(self):
        """Boolean flat mask of nodes lying on the domain boundary."""
        if self._boundary is None:
            mask = np.zeros(self.shape, dtype=bool)
            for axis in range(self.dim):
                sl = [slice(None)] * self.dim
                sl[axis] = 0
                mask[tuple(sl)] = True
                sl[axis] = self.nodes_per_axis[axis] - 1
                mask[tuple(sl)] = True
            self._boundary = mask.reshape(-1)
        return self._boundary

    def refined(self):
        """The nested midpoint refinement: 2n - 1 nodes per axis, same box."""
        fine = tuple(2 * n - 1 for n in self.nodes_per_axis)
        return RegularGrid(self.lower, self.upper, fine, node_cap=DEFAULT_NODE_CAP * 16)

    def nests(self, fine):
        """True when `fine` is this grid's midpoint refinement."""
        return (
            self.lower == fine.lower
            and self.upper == fine.upper
            and all(nf == 2 * nc - 1 for nc, nf in zip(self.nodes_per_axis, fine.nodes_per_axis))
        )

    def __eq__(self, other):
        return (
            isinstance(other, RegularGrid)
            and self.lower == other.lower
            and self.upper == other.upper
            and self.nodes_per_axis == other.nodes_per_axis
        )

    def __hash__(self):
        return hash((self.lower, self.upper, self.nodes_per_axis))

    def __repr__(self):
        return (
            f"RegularGrid(lower={self.lower}, upper={self.upper}, "
            f"nodes_per_axis={self.nodes_per_axis})"
        )


class ValueField:
    """One scalar per grid node, flat row-major storage, always finite."""

    def __init__(self, grid, values, copy=True):
        values = np.array(values, dtype=float, copy=copy).reshape(-1)
        if values.size != grid.num_nodes:
            raise GridError(
                f"field length {values.size} does not match grid with {grid.num_nodes} nodes"
            )
        if not np.isfinite(values).all():
            raise GridError("field contains non-finite entries")
        self.grid = grid
        self.values = values

    @classmethod
    def full(cls, grid, value):
        return cls(grid, np.full(grid.num_nodes, float(value)), copy=False)

    def copy(self):
        return ValueField(self.grid, self.values, copy=True)

    def reshaped(self):
        """Values viewed in the grid's multi-dimensional shape."""
        return self.values.reshape(self.grid.shape)


@dataclass
class CellLocation:
    """A point expressed as a cell base node plus local coordinates in [0,1]^d."""

    base_index: tuple
    local: np.ndarray

    def point(self, grid):
        """Reconstruct the located point's coordinates on `grid`."""
        base = np.asarray(self.base_index, dtype=float)
        return np.asarray(grid.lower) + (base + self.local) * np.asarray(grid.spacing)


def _corner_offsets(dim):
    """All 2^d cell corner offsets in a fixed order (first axis slowest)."""
    return list(itertools.product((0, 1), repeat=dim))


def locate_points(grid, points):
    """Vectorized cell location for an (n, d) batch of points.

    Returns (base, local, inside): integer base indices (n, d) clipped into
    valid cell range, local coordinates (n, d) clipped into [0, 1], and a
    boolean in-closed-box mask.  Points on the upper face map into the last
    cell with local coordinate 1.
    """
    points = np.asarray(points, dtype=float)
    lo = np.asarray(grid.lower)
    hi = np.asarray(grid.upper_node)
    h = np.asarray(grid.spacing)
    inside = np.logical_and(points >= lo, points <= hi).all(axis=1)
    u = (points - lo) / h
    base = np.floor(u).astype(np.int64)
    np.clip(base, 0, np.asarray(grid.nodes_per_axis) - 2, out=base)
    local = u - base
    np.clip(local, 0.0, 1.0, out=local)
    return base, local, inside


def locate_cell(grid, point):
    """Locate one point; returns a CellLocation, or None when outside the box."""
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.size != grid.dim:
        raise GridError(f"point has dimension {point.size}, grid has {grid.dim}")
    base, local, inside = locate_points(grid, point[None, :])
    if not inside[0]:
        return None
    return CellLocation(tuple(int(b) for b in base[0]), local[0])


def interpolate_values(grid, values, points, exterior_value):
    """Multilinear interpolation of flat nodal `values` at (n, d) `points`.

    Points outside the closed box evaluate to `exterior_value`.  The corner
    accumulation order is fixed, so results are reproducible bit for bit
    regardless of how callers batch the points.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n == 0:
        return np.empty(0)
    base, local, inside = locate_points(grid, points)
    strides = np.asarray(grid.strides, dtype=np.int64)
    flat = base @ strides
    acc = np.zeros(n)
    for corner in _corner_offsets(grid.dim):
        offset = int(np.dot(corner, strides))
        w = np.ones(n)
        for axis, bit in enumerate(corner):
            w = w * (local[:, axis] if bit else 1.0 - local[:, axis])
        acc += w * values[flat + offset]
    if inside.all():
        return acc
    return np.where(inside, acc, exterior_value)


def interpolate(field, point, exterior_value):
    """Multilinear interpolation of a ValueField at a single point."""
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.size != field.grid.dim:
        raise GridError(
            f"point has dimension {point.size}, grid has {field.grid.dim}"
        )
    if not np.isfinite(field.values).all():
        raise GridError("field contains non-finite entries")
    return float(interpolate_values(field.grid, field.values, point[None, :], exterior_value)[0])


def _expand_axis(arr, axis):
    """Insert midpoints along one axis: n entries become 2n - 1."""
    n = arr.shape[axis]
    shape = list(arr.shape)
    shape[axis] = 2 * n - 1
    out = np.empty(shape, dtype=arr.dtype)
    even = [slice(None)] * arr.ndim
    even[axis] = slice(0, None, 2)
    out[tuple(even)] = arr
    lo = [slice(None)] * arr.ndim
    lo[axis] = slice(0, n - 1)
    hi = [slice(None)] * arr.ndim
    hi[axis] = slice(1, n)
    odd = [slice(None)] * arr.ndim
    odd[axis] = slice(1, None, 2)
    out[tuple(odd)] = 0.5 * (arr[tuple(lo)] + arr[tuple(hi)])
    return out


def prolongate(coarse, fine_grid):
    """Transfer a coarse field to its midpoint-refined fine grid.

    Coincident nodes copy bitwise; inserted nodes get the multilinear average
    of the enclosing coarse cell corners.  The fine grid must be the exact
    node-doubling of the coarse grid (same box, 2n - 1 nodes per axis);
    anything else is rejected because the accuracy-preservation argument for
    the coarse-to-fine warm start relies on midpoint insertion.
    """
    cg = coarse.grid
    if not cg.nests(fine_grid):
        raise GridError(
            "fine grid is not the midpoint refinement of the coarse grid "
            f"(coarse {cg.nodes_per_axis} on {cg.lower}..{cg.upper}, "
            f"fine {fine_grid.nodes_per_axis} on {fine_grid.lower}..{fine_grid.upper})"
        )
    arr = coarse.reshaped()
    for axis in range(cg.dim):
        arr = _expand_axis(arr, axis)
    return ValueField(fine_grid, arr.reshape(-1), copy=False)


def _check_same_grid(a, b):
    if a.grid is not b.grid and a.grid != b.grid:
        raise GridError("fields live on different grids")


def sup_diff(a, b):
    """Maximum absolute nodewise difference of two same-grid fields."""
    _check_same_grid(a, b)
    return float(np.max(np.abs(a.values - b.values)))


def l1_diff(a, b):
    """Cell-volume-weighted L1 difference: sum |a_i - b_i| times the cell volume."""
    _check_same_grid(a, b)
    vol = 1.0
    for h in a.grid.spacing:
        vol *= h
    return float(np.sum(np.abs(a.values - b.values)) * vol)


def write_field_table(field, fh):
    """Write a field as a plain-text table, one row per node in flat order.

    Columns are the node coordinates (x1 .. xd) followed by the value, with
    17 significant digits so float64 values round-trip exactly.
    """
    grid = field.grid
    header = " ".join(f"x{i + 1}" for i in range(grid.dim)) + " value"
    fh.write(header + "\n")
    nodes = grid.nodes()
    values = field.values
    for i in range(grid.num_nodes):
        row = " ".join(FIELD_FLOAT_FORMAT % c for c in nodes[i])
        fh.write(f"{row} {FIELD_FLOAT_FORMAT % values[i]}\n")


def read_field_table(fh, grid):
    """Read a table written by write_field_table back onto `grid`."""
    header = fh.readline()
    expected = " ".join(f"x{i + 1}" for i in range(grid.dim)) + " value"
    if header.strip() != expected:
        raise GridError(f"unexpected field table header: {header.strip()!r}")
    data = np.loadtxt(fh, ndmin=2)
    if data.shape[0] != grid.num_nodes or data.shape[1] != grid.dim + 1:
        raise GridError("field table does not match the grid")
    return ValueField(grid, data[:, -1])
