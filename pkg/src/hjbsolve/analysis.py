"""Error norms against references, empirical convergence rates, Kruzkhov
transforms, residual-history diagnostics, and feedback-trajectory synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import l1_diff, sup_diff, ValueField
from .problems import euler_arrival
from .solvers import greedy_control_index

REACHED_TARGET = "reached_target"
HORIZON_EXCEEDED = "horizon_exceeded"
LEFT_DOMAIN = "left_domain"

_INFINITY_CUTOFF = 1.0 - 1e-14


@dataclass
class ErrorRecord:
    dx: float
    l1_error: float
    sup_error: float

    def __post_init__(self):
        if self.l1_error < 0 or self.sup_error < 0:
            raise ValueError("errors must be nonnegative")


@dataclass
class Trajectory:
    """A closed-loop run: (time, state, control index) samples plus outcome."""

    samples: list
    status: str
    final_time: float
    final_state: np.ndarray


def kruzkhov_to_time(v):
    """Invert the bounded transform: T = -log(1 - v), with v >= 1 mapping to
    infinity.  Accepts scalars or arrays; values must lie in [0, 1 + 1e-12]."""
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1.0 + 1e-12):
        raise ValueError("transformed values must lie in [0, 1]")
    flat = np.atleast_1d(arr).astype(float).copy()
    finite = flat < _INFINITY_CUTOFF
    out = np.full(flat.shape, np.inf)
    out[finite] = -np.log1p(-flat[finite])
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def time_to_kruzkhov(T):
    """The bounded transform 1 - exp(-T) of a nonnegative (possibly infinite)
    time.  Accepts scalars or arrays."""
    arr = np.asarray(T, dtype=float)
    if np.any(arr < 0):
        raise ValueError("times must be nonnegative")
    out = np.where(np.isinf(arr), 1.0, -np.expm1(-np.where(np.isinf(arr), 0.0, arr)))
    if np.isscalar(T) or np.ndim(T) == 0:
        return float(out)
    return out


def error_vs_reference(V, reference):
    """Nodewise errors of a field against a reference map state -> value."""
    grid = V.grid
    ref = np.asarray(reference(grid.nodes()), dtype=float).reshape(-1)
    ref_field = ValueField(grid, ref, copy=False)
    return ErrorRecord(
        dx=min(grid.spacing),
        l1_error=l1_diff(V, ref_field),
        sup_error=sup_diff(V, ref_field),
    )


def minimum_time_reference(entry):
    """Reference value map for an eikonal-style catalog entry: the Kruzkhov
    transform of the exact distance-to-target time."""
    if entry.reference_time is None:
        raise ValueError(f"no reference solution for {entry.name}")

    def ref(points):
        return time_to_kruzkhov(entry.reference_time(points))

    return ref


def convergence_rates(records):
    """log2 error ratios across successively halved resolutions.

    Records must be sorted by decreasing dx with exact halving between
    successive entries; returns one (l1_rate, sup_rate) pair per step.
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError("need at least two error records")
    rates = []
    for a, b in zip(records, records[1:]):
        if not a.dx > b.dx:
            raise ValueError("records must be sorted by decreasing dx")
        ratio = a.dx / b.dx
        if abs(ratio - 2.0) > 1e-9:
            raise ValueError(f"resolutions must halve exactly, got ratio {ratio}")
        l1 = math.log2(a.l1_error / b.l1_error) if b.l1_error > 0 else math.inf
        sup = math.log2(a.sup_error / b.sup_error) if b.sup_error > 0 else math.inf
        rates.append((l1, sup))
    return rates


def _reached(spec, grid, x):
    kind = spec.kind
    if bool(np.asarray(kind.target(x[None, :]))[0]):
        return True
    if kind.point is not None:
        half_diag = 0.5 * math.sqrt(sum(h * h for h in grid.spacing))
        return float(np.linalg.norm(x - np.asarray(kind.point))) <= half_diag
    return False


def synthesize_trajectory(spec, V, controls, x0, dt, max_time):
    """Greedy closed-loop rollout under a computed value field.

    Repeats greedy control selection and an Euler step until the target is
    hit (minimum time), the state leaves the domain, or max_time elapses.
    """
    x = np.asarray(x0, dtype=float).reshape(-1)
    grid = V.grid
    samples = []
    t = 0.0
    status = HORIZON_EXCEEDED
    while True:
        if spec.minimum_time and _reached(spec, grid, x):
            status = REACHED_TARGET
            break
        if not spec.contains(x):
            status = LEFT_DOMAIN
            break
        if t >= max_time:
            status = HORIZON_EXCEEDED
            break
        j = greedy_control_index(spec, V, controls, x, dt)
        samples.append((t, x.copy(), j))
        x = euler_arrival(spec, x, controls.vectors[j], dt)
        t += dt
    return Trajectory(samples=samples, status=status, final_time=t, final_state=x)


@dataclass
class ResidualSummary:
    """Convergence-history diagnostics for one solve."""

    tail_factor: Optional[float]
    ratios: list = field(default_factory=list)
    superlinear_tail: Optional[bool] = None
    iterations_to_threshold: dict = field(default_factory=dict)


def residual_diagnostics(report, window=5):
    """Summarize a residual history.

    tail_factor is the geometric-mean contraction over the last `window`
    residuals (for plain fixed-point iterations it approximates the discount
    factor); superlinear_tail reports whether the final residual drop ratios
    are decreasing, the signature of locally superlinear convergence.  With a
    history shorter than the fit window a partial summary is returned.
    """
    hist = [r for r in report.residual_history]
    thresholds = {}
    for k in range(1, 13):
        thr = 10.0 ** (-k)
        for i, r in enumerate(hist):
            if r <= thr:
                thresholds[thr] = i + 1
                break
    tail = [r for r in hist[-window:] if r > 0]
    factor = None
    if len(tail) >= 2:
        logs = [math.log(b / a) for a, b in zip(tail, tail[1:])]
        factor = math.exp(sum(logs) / len(logs))
    ratios = [b / a for a, b in zip(hist, hist[1:]) if a > 0]
    superlinear = None
    if len(ratios) >= 2:
        superlinear = ratios[-1] < ratios[-2]
    return ResidualSummary(
        tail_factor=factor,
        ratios=ratios[-window:],
        superlinear_tail=superlinear,
        iterations_to_threshold=thresholds,
    )
