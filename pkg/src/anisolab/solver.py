"""Finite-volume solver on periodic boxes in one and two dimensions.

The scheme is a local Lax-Friedrichs monotone flux for the convective part
plus second differences of the diffusion primitive B(u) for the parabolic
part (with the mixed second difference for off-diagonal entries). Explicit
Euler and a two-stage strong-stability-preserving Runge-Kutta integrator
are available; both are convex combinations of monotone Euler stages under
the time-step rule, so the discrete maximum principle, L1 contraction and
entropy decay hold step by step and are tracked while running.

Off-diagonal diffusion breaks the monotone structure when it dominates the
diagonal; that regime is a documented limitation and not exercised by the
bundled presets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import model as model_mod
from .model import primitive_tables, speed_vector, _as_components, _as_matrix

__all__ = [
    "ConfigurationError",
    "BlowUpError",
    "PeriodicGrid",
    "CellField",
    "SchemeConfig",
    "DiagnosticsRow",
    "RunStats",
    "Trajectory",
    "init_field",
    "numerical_flux_llf",
    "hyperbolic_div",
    "diffusion_div",
    "stable_dt",
    "step",
    "run",
    "run_lockstep",
]

INTEGRATORS = ("euler", "ssp-rk2")
_GAUSS3_NODES = np.array([-math.sqrt(3.0 / 5.0), 0.0, math.sqrt(3.0 / 5.0)])
_GAUSS3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


class ConfigurationError(Exception):
    """Grid or scheme parameters that cannot produce a run."""


class BlowUpError(Exception):
    """The field left the finite range; carries time and partial results."""

    def __init__(self, time, max_abs, trajectory=None):
        super().__init__(f"solution blew up at t={time:.6g} (max |u| reached {max_abs:.3e})")
        self.time = time
        self.max_abs = max_abs
        self.trajectory = trajectory


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform cell grid on a periodic box."""

    dimension: int
    periods: tuple
    cells: tuple

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.dimension}")
        if len(self.periods) != self.dimension or len(self.cells) != self.dimension:
            raise ConfigurationError("periods and cells must match the dimension")
        if any(not (p > 0 and np.isfinite(p)) for p in self.periods):
            raise ConfigurationError(f"periods must be positive, got {self.periods}")
        if any(int(n) < 4 for n in self.cells):
            raise ConfigurationError(f"need at least 4 cells per axis, got {self.cells}")

    @staticmethod
    def make(periods, cells):
        periods = tuple(float(p) for p in np.atleast_1d(periods))
        cells = tuple(int(n) for n in np.atleast_1d(cells))
        return PeriodicGrid(dimension=len(periods), periods=periods, cells=cells)

    @property
    def spacings(self):
        return tuple(p / n for p, n in zip(self.periods, self.cells))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacings))

    @property
    def total_measure(self):
        return float(np.prod(self.periods))

    def centers(self, axis):
        h = self.spacings[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h


@dataclass
class CellField:
    """Cell-average values (row-major over the grid) at one time."""

    values: np.ndarray
    time: float = 0.0


@dataclass
class SchemeConfig:
    """Time integration parameters.

    ``cfl`` values above 1 defeat the monotonicity guarantee and exist for
    deliberate instability experiments; the stable range is (0, 0.5].
    """

    t_end: float
    cfl: float = 0.4
    integrator: str = "ssp-rk2"
    output_every: Optional[float] = None
    snapshot_every: Optional[float] = None

    def __post_init__(self):
        if not (self.t_end > 0 and np.isfinite(self.t_end)):
            raise ConfigurationError(f"t_end must be positive, got {self.t_end}")
        if not (self.cfl > 0 and np.isfinite(self.cfl)):
            raise ConfigurationError(f"cfl must be positive, got {self.cfl}")
        if self.integrator not in INTEGRATORS:
            raise ConfigurationError(
                f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        for name in ("output_every", "snapshot_every"):
            val = getattr(self, name)
            if val is not None and not (val > 0 and np.isfinite(val)):
                raise ConfigurationError(f"{name} must be positive, got {val}")


@dataclass
class DiagnosticsRow:
    t: float
    mean: float
    l1_to_mean: float
    l2_energy: float
    linf: float
    dissipation_resolved: float
    dissipation_budget: float


@dataclass
class RunStats:
    """Per-step extremes accumulated while running."""

    steps: int = 0
    initial_min: float = 0.0
    initial_max: float = 0.0
    initial_mean: float = 0.0
    max_principle_violation: float = 0.0
    energy_max_step_jump: float = 0.0
    max_step_mean_jump: float = 0.0
    mean_drift: float = 0.0
    dt_min: float = math.inf
    dt_max: float = 0.0
    contraction_constants: tuple = ()
    contraction_l1: list = field(default_factory=list)


@dataclass
class Trajectory:
    """Diagnostic rows (plus optional snapshots) from one run."""

    model_name: str
    grid: PeriodicGrid
    scheme: SchemeConfig
    rows: list
    snapshots: list
    stats: Optional[RunStats]
    final: Optional[CellField] = None


def init_field(grid, profile):
    """Cell averages of a pointwise profile via 3-point Gauss per axis.

    ``profile`` takes one coordinate array per axis and must broadcast.
    An ndarray of per-cell values is accepted as-is.
    """
    if isinstance(profile, np.ndarray):
        values = np.asarray(profile, dtype=float)
        if values.shape != tuple(grid.cells):
            raise ConfigurationError(
                f"profile array shape {values.shape} does not match grid {grid.cells}")
        if not np.isfinite(values).all():
            raise ValueError("initial profile contains non-finite values")
        return CellField(values=values.copy(), time=0.0)

    if grid.dimension == 1:
        h = grid.spacings[0]
        pts = grid.centers(0)[:, None] + 0.5 * h * _GAUSS3_NODES[None, :]
        vals = np.asarray(profile(pts), dtype=float)
        values = vals @ _GAUSS3_WEIGHTS
    else:
        h1, h2 = grid.spacings
        x = grid.centers(0)[:, None] + 0.5 * h1 * _GAUSS3_NODES[None, :]
        y = grid.centers(1)[:, None] + 0.5 * h2 * _GAUSS3_NODES[None, :]
        vals = np.asarray(
            profile(x[:, None, :, None], y[None, :, None, :]), dtype=float)
        values = np.einsum("ijxy,x,y->ij", vals, _GAUSS3_WEIGHTS, _GAUSS3_WEIGHTS)
    if not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(values))[0]
        raise ValueError(f"initial profile is non-finite near cell index {tuple(bad)}")
    return CellField(values=values, time=0.0)


def numerical_flux_llf(model, u_left, u_right, axis, alpha):
    """Local Lax-Friedrichs interface flux for one axis.

    ``alpha`` must dominate |a_axis| over the range spanned by the two
    states for the flux to be monotone.
    """
    f_l = model_mod.flux_eval(model, u_left)[axis]
    f_r = model_mod.flux_eval(model, u_right)[axis]
    return 0.5 * (f_l + f_r) - 0.5 * alpha * (float(u_right) - float(u_left))


def _wave_bounds(model, lo, hi, n=129):
    """Bounds for |a| per axis, |A| per entry and |f| over [lo, hi]."""
    us = np.linspace(lo, hi, n)
    a = speed_vector(model, us)
    alphas = np.abs(a).max(axis=0)
    mats = _as_matrix(model.diffusion(us), us.shape, model.dimension, "diffusion")
    lams = np.abs(mats).max(axis=0)
    f = _as_components(model.flux(us), us.shape, model.dimension, "flux")
    fmax = np.abs(f).max(axis=0)
    return alphas, lams, fmax


def _hyperbolic(values, model, grid, alphas):
    """Divergence of the LLF flux, summed over axes."""
    f = _as_components(model.flux(values), values.shape, model.dimension, "flux")
    out = np.zeros_like(values)
    for ax in range(grid.dimension):
        fa = f[..., ax]
        up = np.roll(values, -1, axis=ax)
        interface = 0.5 * (fa + np.roll(fa, -1, axis=ax)) - 0.5 * alphas[ax] * (up - values)
        out += (interface - np.roll(interface, 1, axis=ax)) / grid.spacings[ax]
    return out


def _diffusion(values, grid, tables):
    """Second differences of B(u), including the mixed stencil in 2-d."""
    out = np.zeros_like(values)
    hs = grid.spacings
    for i in range(grid.dimension):
        entry = tables.b[i][i]
        if entry is None:
            continue
        bb = entry(values)
        out += (np.roll(bb, -1, axis=i) - 2.0 * bb + np.roll(bb, 1, axis=i)) / hs[i] ** 2
    if grid.dimension == 2 and tables.b[0][1] is not None:
        bb = tables.b[0][1](values)
        pp = np.roll(np.roll(bb, -1, axis=0), -1, axis=1)
        pm = np.roll(np.roll(bb, -1, axis=0), 1, axis=1)
        mp = np.roll(np.roll(bb, 1, axis=0), -1, axis=1)
        mm = np.roll(np.roll(bb, 1, axis=0), 1, axis=1)
        out += 2.0 * (pp - pm - mp + mm) / (4.0 * hs[0] * hs[1])
    return out


def hyperbolic_div(model, fld, grid):
    """Discrete divergence of f(u); alpha from the current field range."""
    values = np.asarray(fld.values, dtype=float)
    alphas, _, _ = _wave_bounds(model, float(values.min()), float(values.max()))
    return _hyperbolic(values, model, grid, alphas)


def diffusion_div(model, fld, grid):
    """Discrete divergence of A(u) grad u via primitives of A."""
    return _diffusion(np.asarray(fld.values, dtype=float), grid, primitive_tables(model))


def _dt_from_bounds(alphas, lams, grid, cfl):
    hs = grid.spacings
    denom = sum(alphas[i] / hs[i] for i in range(grid.dimension))
    denom += 2.0 * sum(
        lams[i][j] / (hs[i] * hs[j])
        for i in range(grid.dimension) for j in range(grid.dimension))
    if denom <= 0.0:
        return math.inf
    return cfl / denom


def stable_dt(model, fld, grid, cfl=0.4, output_every=None):
    """Largest stable step for the current field range.

    When the model has no dynamics at all (both stability sums vanish)
    the step is capped at the output cadence if one is given, otherwise
    inf is returned and run() applies its own cadence.
    """
    if not (cfl > 0 and np.isfinite(cfl)):
        raise ConfigurationError(f"cfl must be positive, got {cfl}")
    values = np.asarray(fld.values, dtype=float)
    if not np.isfinite(values).all():
        raise ConfigurationError("field contains non-finite values")
    alphas, lams, _ = _wave_bounds(model, float(values.min()), float(values.max()))
    dt = _dt_from_bounds(alphas, lams, grid, cfl)
    if math.isinf(dt) and output_every is not None:
        return float(output_every)
    if math.isnan(dt) or dt <= 0.0:
        raise ConfigurationError(f"stable step is not positive: {dt}")
    return dt


def _advance(values, model, grid, dt, alphas, tables, integrator, skip_flux):
    def tendency(v):
        out = _diffusion(v, grid, tables) if tables.has_diffusion else np.zeros_like(v)
        if not skip_flux:
            out -= _hyperbolic(v, model, grid, alphas)
        return out

    # Overflow here is a diagnosed outcome (BlowUpError), not a warning.
    with np.errstate(over="ignore", invalid="ignore"):
        stage1 = values + dt * tendency(values)
        if integrator == "euler":
            return stage1
        return 0.5 * (values + stage1 + dt * tendency(stage1))


def step(state, model, grid, config, *, dt=None):
    """Advance one step; dt defaults to the stable step for this field."""
    values = np.asarray(state.values, dtype=float)
    alphas, lams, fmax = _wave_bounds(model, float(values.min()), float(values.max()))
    if dt is None:
        dt = _dt_from_bounds(alphas, lams, grid, config.cfl)
        if not np.isfinite(dt):
            cadence = config.output_every
            if cadence is None:
                raise ConfigurationError(
                    "model has no dynamics; set output_every or pass dt explicitly")
            dt = cadence
    tables = primitive_tables(model)
    skip_flux = tables.flux_is_zero and float(alphas.max(initial=0.0)) == 0.0
    new_values = _advance(values, model, grid, dt, alphas, tables,
                          config.integrator, skip_flux)
    if not np.isfinite(new_values).all():
        finite = new_values[np.isfinite(new_values)]
        peak = float(np.abs(finite).max()) if finite.size else math.inf
        raise BlowUpError(state.time + dt, peak)
    return CellField(values=new_values, time=state.time + dt)


def _resolved_dissipation(values, grid, tables):
    """Discrete parabolic dissipation: sum over k of (sum_i D_i beta_ik)^2.

    D_i is the centered difference along axis i; the total is scaled by
    the cell volume.
    """
    d = grid.dimension
    hs = grid.spacings
    total = 0.0
    for k in range(d):
        acc = None
        for i in range(d):
            entry = tables.beta[i][k]
            if entry is None:
                continue
            bb = entry(values)
            grad = (np.roll(bb, -1, axis=i) - np.roll(bb, 1, axis=i)) / (2.0 * hs[i])
            acc = grad if acc is None else acc + grad
        if acc is not None:
            total += float(np.vdot(acc, acc).real)
    return total * grid.cell_volume


def _contraction_constants(lo, hi, mean):
    consts = list(np.linspace(lo, hi, 5)) + [mean]
    out = []
    for c in consts:
        c = float(c)
        if all(abs(c - o) > 1e-12 for o in out):
            out.append(c)
    return out


def _boundaries(t_end, out_every, snap_every):
    """Sorted (time, is_row, is_snap) stop points, always ending at t_end."""
    times = {}
    k = 0
    while True:
        t = k * out_every
        if t > t_end * (1 + 1e-12):
            break
        times[round(t / out_every)] = (min(t, t_end), True, False)
        k += 1
    marks = {t: [is_row, is_snap] for t, is_row, is_snap in times.values()}
    if snap_every is not None:
        k = 0
        while True:
            t = k * snap_every
            if t > t_end * (1 + 1e-12):
                break
            entry = marks.setdefault(t, [False, False])
            entry[1] = True
            k += 1
    entry = marks.setdefault(t_end, [False, False])
    entry[0] = True
    out = sorted((t, m[0], m[1]) for t, m in marks.items())
    merged = []
    for t, is_row, is_snap in out:
        if merged and abs(t - merged[-1][0]) <= 1e-12 * max(1.0, t_end):
            prev = merged.pop()
            merged.append((prev[0], prev[1] or is_row, prev[2] or is_snap))
        else:
            merged.append((t, is_row, is_snap))
    return merged


def run(model, grid, profile, scheme, hooks=()):
    """Integrate to t_end, tracking invariants every step.

    Returns a Trajectory with diagnostic rows at the output cadence,
    optional snapshots, and RunStats holding per-step extremes (maximum
    principle violation, largest positive energy jump, mean drift, and the
    L1 distances to a ladder of constants for the contraction audit).
    Blow-up raises BlowUpError with the partial trajectory attached.
    """
    fld = profile if isinstance(profile, CellField) else init_field(grid, profile)
    values = np.asarray(fld.values, dtype=float).copy()
    tables = primitive_tables(model)
    vol = grid.cell_volume
    ncells = values.size
    t_end = float(scheme.t_end)
    out_every = scheme.output_every if scheme.output_every is not None else t_end / 50.0
    bounds_list = _boundaries(t_end, out_every, scheme.snapshot_every)

    mean0 = float(values.sum()) / ncells
    u0_min = float(values.min())
    u0_max = float(values.max())
    stats = RunStats(
        initial_min=u0_min, initial_max=u0_max, initial_mean=mean0,
        contraction_constants=tuple(_contraction_constants(u0_min, u0_max, mean0)),
    )

    rows = []
    snaps = []
    energy_prev_row = None

    def make_row(t, window_diss):
        nonlocal energy_prev_row
        m = float(values.sum()) / ncells
        l1 = float(np.abs(values - m).sum()) * vol
        energy = float(np.vdot(values, values).real) * vol
        budget = 0.0 if energy_prev_row is None else 0.5 * (energy_prev_row - energy)
        energy_prev_row = energy
        row = DiagnosticsRow(
            t=t, mean=m, l1_to_mean=l1, l2_energy=energy,
            linf=float(np.abs(values).max()),
            dissipation_resolved=window_diss, dissipation_budget=budget)
        rows.append(row)
        stats.contraction_l1.append(
            [float(np.abs(values - c).sum()) * vol for c in stats.contraction_constants])
        for hook in hooks:
            hook(CellField(values=values.copy(), time=t), row)
        return row

    def partial_trajectory():
        return Trajectory(model_name=model.name, grid=grid, scheme=scheme,
                          rows=rows, snapshots=snaps, stats=stats,
                          final=CellField(values=values.copy(), time=t))

    t = 0.0
    has_diff = tables.has_diffusion
    n_prev = _resolved_dissipation(values, grid, tables) if has_diff else 0.0
    window_diss = 0.0
    energy_cur = float(np.vdot(values, values).real) * vol
    mean_cur = mean0
    min_seen = u0_min
    max_seen = u0_max

    idx = 0
    t0, is_row0, is_snap0 = bounds_list[0]
    if t0 == 0.0:
        if is_row0:
            make_row(0.0, 0.0)
        if is_snap0:
            snaps.append(CellField(values=values.copy(), time=0.0))
        idx = 1

    eps_end = 1e-12 * max(1.0, t_end)
    while idx < len(bounds_list):
        target, is_row, is_snap = bounds_list[idx]
        while t < target - eps_end:
            alphas, lams, fmax = _wave_bounds(model, float(values.min()), float(values.max()))
            dt = _dt_from_bounds(alphas, lams, grid, scheme.cfl)
            dt = min(dt, target - t)
            if not np.isfinite(dt) or dt <= 0.0:
                dt = target - t
            skip_flux = tables.flux_is_zero and float(alphas.max(initial=0.0)) == 0.0
            new_values = _advance(values, model, grid, dt, alphas, tables,
                                  scheme.integrator, skip_flux)
            if not np.isfinite(new_values).all():
                finite = new_values[np.isfinite(new_values)]
                peak = float(np.abs(finite).max()) if finite.size else math.inf
                raise BlowUpError(t + dt, peak, trajectory=partial_trajectory())
            stats.steps += 1
            stats.dt_min = min(stats.dt_min, dt)
            stats.dt_max = max(stats.dt_max, dt)
            new_min = float(new_values.min())
            new_max = float(new_values.max())
            stats.max_principle_violation = max(
                stats.max_principle_violation, new_max - u0_max, u0_min - new_min)
            min_seen = min(min_seen, new_min)
            max_seen = max(max_seen, new_max)
            new_energy = float(np.vdot(new_values, new_values).real) * vol
            stats.energy_max_step_jump = max(
                stats.energy_max_step_jump, new_energy - energy_cur)
            new_mean = float(new_values.sum()) / ncells
            stats.max_step_mean_jump = max(
                stats.max_step_mean_jump, abs(new_mean - mean_cur))
            stats.mean_drift = max(stats.mean_drift, abs(new_mean - mean0))
            if has_diff:
                n_new = _resolved_dissipation(new_values, grid, tables)
                window_diss += 0.5 * dt * (n_prev + n_new)
                n_prev = n_new
            values = new_values
            energy_cur = new_energy
            mean_cur = new_mean
            t = t + dt
        t = target
        if is_row:
            make_row(t, window_diss)
            window_diss = 0.0
        if is_snap:
            snaps.append(CellField(values=values.copy(), time=t))
        idx += 1

    return Trajectory(model_name=model.name, grid=grid, scheme=scheme,
                      rows=rows, snapshots=snaps, stats=stats,
                      final=CellField(values=values.copy(), time=t))


def run_lockstep(model, grid, profile_a, profile_b, scheme):
    """Advance two initial data under the identical scheme map.

    Both fields share each step's dt and flux bound (taken over the union
    of their ranges), which is exactly the setting in which the monotone
    scheme contracts the L1 distance. Returns (times, distances, field_a,
    field_b) with distances sampled at the output cadence.
    """
    fa = profile_a if isinstance(profile_a, CellField) else init_field(grid, profile_a)
    fb = profile_b if isinstance(profile_b, CellField) else init_field(grid, profile_b)
    va = np.asarray(fa.values, dtype=float).copy()
    vb = np.asarray(fb.values, dtype=float).copy()
    tables = primitive_tables(model)
    vol = grid.cell_volume
    t_end = float(scheme.t_end)
    out_every = scheme.output_every if scheme.output_every is not None else t_end / 50.0
    bounds_list = _boundaries(t_end, out_every, None)

    times = []
    dists = []

    def record(t):
        times.append(t)
        dists.append(float(np.abs(va - vb).sum()) * vol)

    t = 0.0
    idx = 0
    if bounds_list[0][0] == 0.0:
        record(0.0)
        idx = 1
    eps_end = 1e-12 * max(1.0, t_end)
    while idx < len(bounds_list):
        target, is_row, _ = bounds_list[idx]
        while t < target - eps_end:
            lo = min(float(va.min()), float(vb.min()))
            hi = max(float(va.max()), float(vb.max()))
            alphas, lams, fmax = _wave_bounds(model, lo, hi)
            dt = _dt_from_bounds(alphas, lams, grid, scheme.cfl)
            dt = min(dt, target - t)
            if not np.isfinite(dt) or dt <= 0.0:
                dt = target - t
            skip_flux = tables.flux_is_zero and float(alphas.max(initial=0.0)) == 0.0
            va2 = _advance(va, model, grid, dt, alphas, tables, scheme.integrator, skip_flux)
            vb2 = _advance(vb, model, grid, dt, alphas, tables, scheme.integrator, skip_flux)
            if not (np.isfinite(va2).all() and np.isfinite(vb2).all()):
                raise BlowUpError(t + dt, math.inf)
            va, vb = va2, vb2
            t = t + dt
        t = target
        if is_row:
            record(t)
        idx += 1
    return times, dists, CellField(va, t), CellField(vb, t)
