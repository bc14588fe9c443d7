"""Dynamic-programming solvers on regular grids.

Three algorithms share one semi-Lagrangian discretization: value iteration,
Howard policy iteration with either a fixed-point or a direct sparse policy
evaluation, and the accelerated scheme that warm-starts fine-grid policy
iteration from a coarse-grid value iteration.

All sweeps have Jacobi semantics: every node update reads only the previous
iterate, argmin ties break toward the lowest control index, and the sup-norm
reduction is a plain max.  Per-node arithmetic never depends on how a sweep
is split across workers, so any worker count produces bit-identical results.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    RegularGrid,
    ValueField,
    _corner_offsets,
    interpolate_values,
    locate_points,
    prolongate,
    sup_diff,
)
from .problems import target_mask

UNSET_POLICY = -1

# Arrival points are iteration-independent, so interpolation stencils can be
# precomputed once per (grid, control set).  Cache them while the entry count
# m * N * 2^d stays below this budget (~16 bytes per entry, so ~2.5 GB);
# larger sweeps recompute stencils on the fly.
_STENCIL_CACHE_LIMIT = 160_000_000
_STAGE_CACHE_LIMIT = 20_000_000


class SolverError(RuntimeError):
    """Numerical failure inside a solver sweep or linear solve."""


@dataclass
class SolverConfig:
    """Shared solver settings.

    The stopping test compares consecutive iterates in the sup norm against
    eps = stop_constant * (min axis spacing)^2, computed once per grid.  The
    stopping norm is fixed to the sup norm.  `workers` splits the control
    enumeration of Bellman-style sweeps across threads; it affects wall time
    only, never results.
    """

    dt: float
    stop_constant: float = 0.2
    max_iterations: int = 20000
    eval_backend: str = "fixed_point"
    record_residuals: bool = True
    workers: int = 1
    norm: str = "sup"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.stop_constant > 0:
            raise ValueError("stop_constant must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.eval_backend not in ("fixed_point", "direct"):
            raise ValueError(f"unknown eval_backend {self.eval_backend!r}")
        if self.norm != "sup":
            raise ValueError("only the sup stopping norm is supported")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def epsilon(self, grid):
        return self.stop_constant * min(grid.spacing) ** 2

    def inner_cap(self):
        return 10 * self.max_iterations


@dataclass
class PolicyField:
    """One control index per grid node; pinned nodes carry UNSET_POLICY."""

    grid: RegularGrid
    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int32).reshape(-1)
        if self.indices.size != self.grid.num_nodes:
            raise ValueError("policy length does not match grid")

    @classmethod
    def constant(cls, grid, index=0):
        return cls(grid, np.full(grid.num_nodes, index, dtype=np.int32))


@dataclass
class RunReport:
    """Instrumentation for one solve.

    node_updates counts single-node, single-control evaluations: a Bellman or
    improvement sweep contributes (active nodes) * (control count), a frozen-
    policy evaluation sweep contributes (active nodes).  This is the portable
    work metric; wall time is reported but machine dependent.
    """

    algorithm: str
    grid_shape: tuple
    dx: float
    dt: float
    control_count: int
    epsilon: float
    outer_iterations: int
    node_updates: int
    wall_time_seconds: float
    converged: bool
    residual_history: list = dataclass_field(default_factory=list)
    sub_iteration_history: list = dataclass_field(default_factory=list)
    phases: Optional[dict] = None

    def to_text(self):
        lines = [
            f"algorithm = {self.algorithm}",
            f"grid_shape = {','.join(str(n) for n in self.grid_shape)}",
            f"dx = {self.dx:.17g}",
            f"dt = {self.dt:.17g}",
            f"control_count = {self.control_count}",
            f"epsilon = {self.epsilon:.17g}",
            f"iterations = {self.outer_iterations}",
            f"sub_iterations = {','.join(str(m) for m in self.sub_iteration_history)}",
            f"node_updates = {self.node_updates}",
            f"converged = {self.converged}",
            f"wall_time_seconds = {self.wall_time_seconds:.6f}",
            "residual_history = "
            + ",".join("%.17g" % r for r in self.residual_history),
        ]
        if self.phases:
            for key, sub in self.phases.items():
                for line in sub.to_text().splitlines():
                    lines.append(f"{key}.{line}")
        return "\n".join(lines) + "\n"


@dataclass
class _Stencil:
    """Interpolation data for a batch of arrival points."""

    corners: np.ndarray  # (n, 2^d) flat node indices
    weights: np.ndarray  # (n, 2^d) multilinear weights
    inside: np.ndarray  # (n,) in-box mask
    all_inside: bool


def _batch_stencil(grid, points):
    base, local, inside = locate_points(grid, points)
    strides = np.asarray(grid.strides, dtype=np.int64)
    flat = base @ strides
    n = points.shape[0]
    offsets = _corner_offsets(grid.dim)
    corners = np.empty((n, len(offsets)), dtype=np.int64)
    weights = np.empty((n, len(offsets)))
    for k, corner in enumerate(offsets):
        corners[:, k] = flat + int(np.dot(corner, strides))
        w = np.ones(n)
        for axis, bit in enumerate(corner):
            w = w * (local[:, axis] if bit else 1.0 - local[:, axis])
        weights[:, k] = w
    return _Stencil(corners, weights, inside, bool(inside.all()))


def _stencil_apply(stencil, values, exterior_value):
    """Interpolate nodal values at the stencil's points (fixed corner order)."""
    corners = stencil.corners
    weights = stencil.weights
    acc = weights[:, 0] * values[corners[:, 0]]
    for k in range(1, corners.shape[1]):
        acc += weights[:, k] * values[corners[:, k]]
    if stencil.all_inside:
        return acc
    return np.where(stencil.inside, acc, exterior_value)


def _control_blocks(n_controls, workers):
    workers = max(1, min(workers, n_controls))
    step = (n_controls + workers - 1) // workers
    return [list(range(lo, min(lo + step, n_controls))) for lo in range(0, n_controls, step)]


class _Sweeper:
    """Precomputed per-problem data for Jacobi sweeps on one grid."""

    def __init__(self, spec, grid, controls, config):
        self.spec = spec
        self.grid = grid
        self.controls = controls
        self.dt = config.dt
        self.workers = config.workers
        self.nodes = grid.nodes()
        self.minimum_time = spec.minimum_time

        pin = np.zeros(grid.num_nodes, dtype=bool)
        pin_values = np.zeros(grid.num_nodes)
        if spec.boundary_value is not None:
            bmask = grid.boundary_mask()
            pin |= bmask
            pin_values[bmask] = spec.boundary_value
        if self.minimum_time:
            tmask = target_mask(spec, grid).flags
            pin |= tmask
            pin_values[tmask] = 0.0
        self.pinned = pin
        self.pinned_values = pin_values
        self.active_count = int(grid.num_nodes - np.count_nonzero(pin))

        if self.minimum_time:
            self.discount = math.exp(-self.dt)
            self.stage_scalar = -math.expm1(-self.dt)
            self._stage_cache = None
        else:
            self.discount = math.exp(-spec.kind.lam * self.dt)
            self.stage_scalar = None
            if len(controls) * grid.num_nodes <= _STAGE_CACHE_LIMIT:
                self._stage_cache = [
                    self.dt * np.asarray(spec.running_cost(self.nodes, a), dtype=float)
                    for a in controls.vectors
                ]
            else:
                self._stage_cache = None

        m = len(controls)
        if m * grid.num_nodes * 2 ** grid.dim <= _STENCIL_CACHE_LIMIT:
            self._stencils = [
                self._arrival_stencil(j) for j in range(m)
            ]
        else:
            self._stencils = None

    def _arrival_stencil(self, j):
        a = self.controls.vectors[j]
        arrivals = self.nodes + self.dt * np.asarray(self.spec.dynamics(self.nodes, a))
        if not np.isfinite(arrivals).all():
            raise SolverError(f"non-finite arrival under control {j}")
        return _batch_stencil(self.grid, arrivals)

    def stage(self, j):
        if self.minimum_time:
            return self.stage_scalar
        if self._stage_cache is not None:
            return self._stage_cache[j]
        a = self.controls.vectors[j]
        return self.dt * np.asarray(self.spec.running_cost(self.nodes, a), dtype=float)

    def control_values(self, j, values):
        """Discounted continuation plus stage cost for one control, all nodes."""
        if self._stencils is not None:
            stencil = self._stencils[j]
        else:
            stencil = self._arrival_stencil(j)
        interp = _stencil_apply(stencil, values, self.spec.exterior_value)
        q = self.discount * interp + self.stage(j)
        if not np.isfinite(q).all():
            bad = int(np.flatnonzero(~np.isfinite(q))[0])
            raise SolverError(f"non-finite update at node {bad} under control {j}")
        return q

    def apply_pins(self, values, policy=None):
        values[self.pinned] = self.pinned_values[self.pinned]
        if policy is not None:
            policy[self.pinned] = UNSET_POLICY

    def initial_field(self):
        """Default initial iterate: 0 everywhere (discounted problems) or the
        transform's range endpoints 1 off target / 0 on target (minimum
        time), with any fixed boundary values applied."""
        if self.minimum_time:
            v = np.ones(self.grid.num_nodes)
        else:
            v = np.zeros(self.grid.num_nodes)
        self.apply_pins(v)
        return ValueField(self.grid, v, copy=False)

    def bellman_sweep(self, values):
        """One Jacobi sweep of the min-over-controls update.

        Returns (new values, argmin policy, evaluation count).  The control
        enumeration is split across workers in contiguous blocks and merged
        in ascending control order, which reproduces the sequential
        lowest-index tie-breaking exactly.
        """
        m = len(self.controls)
        blocks = _control_blocks(m, self.workers)
        results = [None] * len(blocks)

        def run_block(b):
            js = blocks[b]
            best = self.control_values(js[0], values)
            best_idx = np.full(best.size, js[0], dtype=np.int32)
            for j in js[1:]:
                q = self.control_values(j, values)
                better = q < best
                best[better] = q[better]
                best_idx[better] = j
            results[b] = (best, best_idx)

        if len(blocks) == 1:
            run_block(0)
        else:
            with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
                futures = [pool.submit(run_block, b) for b in range(len(blocks))]
                for fut in futures:
                    fut.result()

        best, best_idx = results[0]
        for partial, partial_idx in results[1:]:
            better = partial < best
            best[better] = partial[better]
            best_idx[better] = partial_idx[better]
        self.apply_pins(best, best_idx)
        return best, best_idx, self.active_count * m

    def policy_stencil(self, policy):
        """Frozen-policy interpolation stencil plus stage costs.

        For each node, the arrival point under its assigned control defines
        up to 2^d corner weights; arrivals outside the box route their full
        mass to the exterior constant.  Pinned nodes get empty rows.
        """
        grid = self.grid
        n = grid.num_nodes
        ncorner = 2 ** grid.dim
        corners = np.zeros((n, ncorner), dtype=np.int64)
        weights = np.zeros((n, ncorner))
        inside = np.zeros(n, dtype=bool)
        stage = np.zeros(n)
        idx = policy.indices
        if ((idx == UNSET_POLICY) & ~self.pinned).any():
            raise SolverError("policy is undefined on non-pinned nodes")
        for j in range(len(self.controls)):
            sel = np.flatnonzero(idx == j)
            if sel.size == 0:
                continue
            pts = self.nodes[sel]
            a = self.controls.vectors[j]
            arrivals = pts + self.dt * np.asarray(self.spec.dynamics(pts, a))
            if not np.isfinite(arrivals).all():
                raise SolverError(f"non-finite arrival under control {j}")
            part = _batch_stencil(grid, arrivals)
            corners[sel] = part.corners
            weights[sel] = part.weights
            inside[sel] = part.inside
            if self.minimum_time:
                stage[sel] = self.stage_scalar
            else:
                stage[sel] = self.dt * np.asarray(
                    self.spec.running_cost(pts, a), dtype=float
                )
        return _PolicyStencil(
            _Stencil(corners, weights, inside, bool(inside.all())), stage
        )

    def evaluation_sweep(self, values, pstencil):
        """One frozen-policy sweep; returns (new values, evaluation count)."""
        interp = _stencil_apply(pstencil.stencil, values, self.spec.exterior_value)
        out = pstencil.stage + self.discount * interp
        self.apply_pins(out)
        if not np.isfinite(out).all():
            bad = int(np.flatnonzero(~np.isfinite(out))[0])
            raise SolverError(f"non-finite evaluation update at node {bad}")
        return out, self.active_count


@dataclass
class _PolicyStencil:
    stencil: _Stencil
    stage: np.ndarray


def default_initial_field(spec, grid):
    """Standard initial iterate for a problem (see _Sweeper.initial_field)."""
    if spec.minimum_time:
        v = np.ones(grid.num_nodes)
        v[target_mask(spec, grid).flags] = 0.0
    else:
        v = np.zeros(grid.num_nodes)
    if spec.boundary_value is not None:
        v[grid.boundary_mask()] = spec.boundary_value
        if spec.minimum_time:
            v[target_mask(spec, grid).flags] = 0.0
    return ValueField(grid, v, copy=False)


def bellman_update(spec, grid, V, controls, config):
    """One Jacobi min-over-controls update of a value field.

    Every node reads only the input field; per node all controls are
    enumerated, the discounted interpolated continuation plus stage cost is
    minimized, and the argmin index is recorded (ties break low).  Target and
    fixed-boundary nodes are pinned.
    """
    sweeper = _Sweeper(spec, grid, controls, config)
    out, pol, _ = sweeper.bellman_sweep(V.values)
    return ValueField(grid, out, copy=False), PolicyField(grid, pol)


def policy_improvement(spec, grid, V, controls, dt, workers=1):
    """Greedy argmin policy extraction against a fixed value field."""
    config = SolverConfig(dt=dt, workers=workers)
    sweeper = _Sweeper(spec, grid, controls, config)
    _, pol, _ = sweeper.bellman_sweep(V.values)
    return PolicyField(grid, pol)


def greedy_control_index(spec, V, controls, x, dt):
    """Index of the greedy control at an arbitrary in-domain state."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if not spec.contains(x):
        raise SolverError(f"state {x!r} lies outside the problem domain")
    if spec.minimum_time:
        discount = math.exp(-dt)
        stage = [-math.expm1(-dt)] * len(controls)
    else:
        discount = math.exp(-spec.kind.lam * dt)
        stage = [
            dt * float(np.asarray(spec.running_cost(x[None, :], a)).reshape(-1)[0])
            for a in controls.vectors
        ]
    best = math.inf
    best_j = 0
    for j, a in enumerate(controls.vectors):
        arrival = x + dt * np.asarray(spec.dynamics(x, a), dtype=float).reshape(-1)
        val = interpolate_values(
            V.grid, V.values, arrival[None, :], spec.exterior_value
        )[0]
        q = discount * val + stage[j]
        if not math.isfinite(q):
            raise SolverError(f"non-finite greedy evaluation under control {j}")
        if q < best:
            best = q
            best_j = j
    return best_j


def greedy_control(spec, V, controls, x, dt):
    """The greedy control vector at an arbitrary in-domain state."""
    return controls.vectors[greedy_control_index(spec, V, controls, x, dt)]


def _make_report(algorithm, grid, config, controls, eps, iterations, updates,
                 wall, converged, history, subs=None):
    return RunReport(
        algorithm=algorithm,
        grid_shape=grid.nodes_per_axis,
        dx=min(grid.spacing),
        dt=config.dt,
        control_count=len(controls),
        epsilon=eps,
        outer_iterations=iterations,
        node_updates=updates,
        wall_time_seconds=wall,
        converged=converged,
        residual_history=history,
        sub_iteration_history=subs or [],
    )


def value_iteration(spec, grid, controls, config, V0=None):
    """Fixed-point iteration of the Bellman update to the C*dx^2 stop test.

    Returns the last iterate, its greedy policy, and the run report.  Hitting
    max_iterations is reported as converged=False, not raised.
    """
    sweeper = _Sweeper(spec, grid, controls, config)
    eps = config.epsilon(grid)
    if V0 is None:
        V = sweeper.initial_field()
    else:
        v = V0.values.copy()
        sweeper.apply_pins(v)
        V = ValueField(grid, v, copy=False)

    t0 = time.perf_counter()
    history = []
    updates = 0
    converged = False
    iterations = 0
    for _ in range(config.max_iterations):
        new_values, _, evals = sweeper.bellman_sweep(V.values)
        iterations += 1
        updates += evals
        r = float(np.max(np.abs(new_values - V.values)))
        if config.record_residuals:
            history.append(r)
        V = ValueField(grid, new_values, copy=False)
        if r <= eps:
            converged = True
            break
    # One extra argmin sweep so the returned policy is greedy for the
    # returned (final) iterate.
    _, pol, evals = sweeper.bellman_sweep(V.values)
    updates += evals
    wall = time.perf_counter() - t0
    report = _make_report(
        "vi", grid, config, controls, eps, iterations, updates, wall, converged, history
    )
    return V, PolicyField(grid, pol), report


def policy_evaluation_fixed_point(spec, grid, policy, controls, V_init, config):
    """Frozen-policy value by warm-started fixed-point sweeps.

    Iterates the linear one-step update until consecutive sweeps differ by at
    most eps in the sup norm (the same test as the outer loop).  Returns
    (field, sweep count, converged); a False flag means the inner iteration
    cap was hit and the caller should treat the evaluation as failed.
    """
    sweeper = _Sweeper(spec, grid, controls, config)
    pstencil = sweeper.policy_stencil(policy)
    eps = config.epsilon(grid)
    v = V_init.values.copy()
    sweeper.apply_pins(v)
    field, count, ok, _ = _fixed_point_loop(sweeper, pstencil, v, eps, config.inner_cap())
    return field, count, ok


def _fixed_point_loop(sweeper, pstencil, v, eps, cap):
    count = 0
    converged = False
    updates = 0
    while count < cap:
        new, evals = sweeper.evaluation_sweep(v, pstencil)
        count += 1
        updates += evals
        r = float(np.max(np.abs(new - v)))
        v = new
        if r <= eps:
            converged = True
            break
    return ValueField(sweeper.grid, v, copy=False), count, converged, updates


def policy_evaluation_direct(spec, grid, policy, controls, config):
    """Frozen-policy value via a sparse linear solve.

    Assembles (I - discount * L) V = stage + discount * exterior_mass, where
    L holds the multilinear interpolation weights of each node's arrival
    point (at most 2^d nonnegative entries per row summing to at most 1; the
    discount makes the system strictly diagonally dominant), and solves with
    BiCGStab to residual eps/10.  Stagnation raises, carrying the achieved
    residual.  Returns (field, solver iteration count).
    """
    sweeper = _Sweeper(spec, grid, controls, config)
    pstencil = sweeper.policy_stencil(policy)
    stencil = pstencil.stencil
    eps = config.epsilon(grid)
    n = grid.num_nodes
    active = ~sweeper.pinned & stencil.inside

    weights = np.where(active[:, None], stencil.weights, 0.0)
    rows = np.repeat(np.arange(n, dtype=np.int64), stencil.corners.shape[1])
    cols = stencil.corners.reshape(-1)
    data = (-sweeper.discount * weights).reshape(-1)
    matrix = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    matrix = matrix + sp.identity(n, format="csr")

    rhs = pstencil.stage.copy()
    exterior_rows = ~sweeper.pinned & ~stencil.inside
    rhs[exterior_rows] += sweeper.discount * spec.exterior_value
    rhs[sweeper.pinned] = sweeper.pinned_values[sweeper.pinned]

    iters = 0

    def count_iters(_):
        nonlocal iters
        iters += 1

    tol = eps / 10.0
    x, info = spla.bicgstab(
        matrix, rhs, rtol=0.0, atol=tol, maxiter=config.inner_cap(),
        callback=count_iters,
    )
    residual = float(np.max(np.abs(matrix @ x - rhs)))
    if info != 0 or residual > tol:
        raise SolverError(
            f"direct policy evaluation stalled: achieved residual {residual:.3e}, "
            f"required {tol:.3e}"
        )
    v = x.copy()
    v[sweeper.pinned] = sweeper.pinned_values[sweeper.pinned]
    return ValueField(grid, v, copy=False), max(iters, 1)


def policy_iteration(spec, grid, controls, config, policy0=None, V_init=None,
                     on_iterate=None):
    """Howard's algorithm: frozen-policy evaluation alternating with greedy
    improvement until consecutive value iterates differ by at most eps.

    Evaluations are warm-started from the previous value iterate.  The
    evaluated value sequence is nodewise nonincreasing up to the evaluation
    tolerance.  sub_iteration_history records the evaluation effort per outer
    step (sweeps, or linear-solver iterations for the direct backend).
    `on_iterate`, when given, receives every evaluated value field.
    """
    sweeper = _Sweeper(spec, grid, controls, config)
    eps = config.epsilon(grid)
    if V_init is None:
        V = sweeper.initial_field()
    else:
        v = V_init.values.copy()
        sweeper.apply_pins(v)
        V = ValueField(grid, v, copy=False)
    if policy0 is None:
        policy = PolicyField.constant(grid, 0)
    else:
        policy = PolicyField(grid, policy0.indices.copy())
    policy.indices[sweeper.pinned] = UNSET_POLICY

    t0 = time.perf_counter()
    history = []
    subs = []
    updates = 0
    converged = False
    iterations = 0
    cap = config.inner_cap()
    for _ in range(config.max_iterations):
        if config.eval_backend == "fixed_point":
            pstencil = sweeper.policy_stencil(policy)
            V_new, inner, _, evals = _fixed_point_loop(
                sweeper, pstencil, V.values.copy(), eps, cap
            )
            updates += evals
        else:
            V_new, inner = policy_evaluation_direct(spec, grid, policy, controls, config)
            updates += inner * sweeper.active_count
        iterations += 1
        r = sup_diff(V_new, V)
        if config.record_residuals:
            history.append(r)
        subs.append(inner)
        V = V_new
        if on_iterate is not None:
            on_iterate(V)
        _, pol, evals = sweeper.bellman_sweep(V.values)
        updates += evals
        policy = PolicyField(grid, pol)
        if r <= eps:
            converged = True
            break
    wall = time.perf_counter() - t0
    report = _make_report(
        "pi", grid, config, controls, eps, iterations, updates, wall, converged,
        history, subs,
    )
    return V, policy, report


def api_solve(spec, coarse_grid, fine_grid, controls, coarse_config, fine_config,
              V0c=None):
    """Accelerated policy iteration: coarse value iteration, multilinear
    prolongation, greedy policy extraction, then fine-grid policy iteration.

    The grids must be nested by midpoint refinement.  The report separates
    the coarse and fine phases and aggregates totals.
    """
    if not coarse_grid.nests(fine_grid):
        raise SolverError(
            "accelerated solve needs fine = midpoint refinement of coarse"
        )
    t0 = time.perf_counter()
    Vc, _, coarse_report = value_iteration(spec, coarse_grid, controls, coarse_config,
                                           V0c)
    coarse_report.algorithm = "api.coarse_vi"

    V0f = prolongate(Vc, fine_grid)
    fine_sweeper = _Sweeper(spec, fine_grid, controls, fine_config)
    v0 = V0f.values.copy()
    fine_sweeper.apply_pins(v0)
    V0f = ValueField(fine_grid, v0, copy=False)
    _, pol0, seed_evals = fine_sweeper.bellman_sweep(V0f.values)
    policy0 = PolicyField(fine_grid, pol0)

    Vf, policy, fine_report = policy_iteration(
        spec, fine_grid, controls, fine_config, policy0, V0f
    )
    fine_report.algorithm = "api.fine_pi"
    fine_report.node_updates += seed_evals
    wall = time.perf_counter() - t0

    report = RunReport(
        algorithm="api",
        grid_shape=fine_grid.nodes_per_axis,
        dx=min(fine_grid.spacing),
        dt=fine_config.dt,
        control_count=len(controls),
        epsilon=fine_config.epsilon(fine_grid),
        outer_iterations=coarse_report.outer_iterations + fine_report.outer_iterations,
        node_updates=coarse_report.node_updates + fine_report.node_updates,
        wall_time_seconds=wall,
        converged=coarse_report.converged and fine_report.converged,
        residual_history=list(coarse_report.residual_history)
        + list(fine_report.residual_history),
        sub_iteration_history=list(fine_report.sub_iteration_history),
        phases={"coarse": coarse_report, "fine": fine_report},
    )
    return Vf, policy, report
