"""Pareto objectives and robustness scans.

Robustness is the width of the first interval (scanning the swept axis upward)
bounded by p_e(T/2) = 0.99 crossings that also contains a sample with
p_e(T/2) >= 0.999. Crossings are located on a coarse grid and refined by
bisection.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qutrit_pareto.dynamics import (
    DEFAULT_ATOL,
    DEFAULT_CONSTANTS,
    DEFAULT_RTOL,
    PhysicsConstants,
    QutritTrajectory,
    evolve,
    final_populations,
)
from qutrit_pareto.pulses import PulseModel

THRESHOLD = 0.99
QUALIFY = 0.999

DETUNING_AXIS = "detuning_GHz"
AMPLITUDE_AXIS = "amplitude_GHz"


@dataclass(frozen=True)
class ScanConfig:
    lo: float = -0.3
    hi: float = 0.3
    coarse_step: float = 1e-3
    xtol: float = 1e-5
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    threads: int = 1

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"scan range must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if self.coarse_step <= 0 or self.xtol <= 0:
            raise ValueError("coarse_step and xtol must be positive")

    def grid(self) -> np.ndarray:
        n = int(np.floor((self.hi - self.lo) / self.coarse_step + 1e-9)) + 1
        xs = self.lo + self.coarse_step * np.arange(n)
        if self.hi - xs[-1] > 1e-12:
            xs = np.append(xs, self.hi)
        return xs


@dataclass(frozen=True)
class AmplitudeScanConfig:
    lo: float = 1e-3
    hi: float = 0.3
    n_points: int = 400
    log_spaced: bool = True
    delta: float = 0.0
    xtol: float = 1e-5
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    threads: int = 1

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise ValueError(f"amplitude range must satisfy 0 <= lo < hi, got [{self.lo}, {self.hi}]")
        if self.log_spaced and self.lo <= 0:
            raise ValueError("a log-spaced amplitude grid needs lo > 0")
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")

    def grid(self) -> np.ndarray:
        if self.log_spaced:
            return np.geomspace(self.lo, self.hi, self.n_points)
        return np.linspace(self.lo, self.hi, self.n_points)


@dataclass(frozen=True)
class Crossing:
    x: float
    rising: bool


@dataclass(frozen=True)
class RobustInterval:
    start: float
    end: float
    qualified: bool
    open_start: bool = False  # curve already above threshold at the scan's lower edge
    open_end: bool = False

    @property
    def width(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ScanCurve:
    axis: str
    x: np.ndarray
    pe: np.ndarray
    crossings: tuple[Crossing, ...]
    refined: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    complete: bool = True  # False when the scan stopped after the first qualified interval

    def intervals(self) -> list[RobustInterval]:
        return robust_intervals(self)

    @property
    def width(self) -> float:
        return robustness_width(self)

    @property
    def unbounded(self) -> bool:
        iv = first_qualified(self)
        return bool(iv and (iv.open_start or iv.open_end))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "p_e_final"])
            for x, pe in zip(self.x, self.pe):
                w.writerow([repr(float(x)), repr(float(pe))])

    def summary(self) -> dict:
        iv = first_qualified(self)
        return {
            "axis": self.axis,
            "crossings_GHz": [c.x for c in self.crossings],
            "width_GHz": robustness_width(self),
            "qualified": iv is not None,
            "interval_GHz": [iv.start, iv.end] if iv else None,
            "width_at_zero_GHz": centred_width(self) if self.axis == DETUNING_AXIS else None,
            "unbounded": self.unbounded,
            "threshold": THRESHOLD,
            "qualify_level": QUALIFY,
        }

    def write_sidecar(self, path: str | Path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.summary(), **extra}, indent=2))


def _bisect_crossings(func, xs, pe, idx, xtol):
    """Refine every bracket [xs[i], xs[i+1]] in ``idx`` in lockstep."""
    a = xs[idx].astype(float)
    b = xs[idx + 1].astype(float)
    pa = pe[idx].astype(float)
    pb = pe[idx + 1].astype(float)
    refined = []
    while np.any(b - a > xtol):
        active = np.flatnonzero(b - a > xtol)
        mid = 0.5 * (a[active] + b[active])
        pm = np.asarray(func(mid), dtype=float)
        refined.append(np.column_stack([mid, pm]))
        same_as_a = (pm >= THRESHOLD) == (pa[active] >= THRESHOLD)
        a[active[same_as_a]] = mid[same_as_a]
        pa[active[same_as_a]] = pm[same_as_a]
        b[active[~same_as_a]] = mid[~same_as_a]
        pb[active[~same_as_a]] = pm[~same_as_a]
    ga = pa - THRESHOLD
    gb = pb - THRESHOLD
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(gb != ga, a + (b - a) * ga / (ga - gb), 0.5 * (a + b))
    x = np.clip(x, a, b)
    crossings = [Crossing(float(xc), bool(rising)) for xc, rising in zip(x, pb >= THRESHOLD)]
    extra = np.concatenate(refined) if refined else np.empty((0, 2))
    return crossings, extra


def scan_function(
    func: Callable[[np.ndarray], np.ndarray],
    grid: np.ndarray,
    xtol: float,
    axis: str = DETUNING_AXIS,
    stop_after_qualified: bool = False,
    block: int = 64,
    centre: float | None = None,
) -> ScanCurve:
    """Sample ``func`` (p_e at the end of the pulse) on ``grid`` and refine its 0.99 crossings.

    With ``stop_after_qualified`` the grid is walked upward in blocks and the
    scan ends once a qualified interval has closed, or, if ``centre`` is given,
    once the interval around ``centre`` has closed.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("scan grid must be strictly ascending")
    if not stop_after_qualified:
        pe = np.clip(np.asarray(func(grid), dtype=float), 0.0, 1.0)
        return _finish(func, grid, pe, xtol, axis, True)
    xs: list[float] = []
    pes: list[float] = []
    start = 0
    while start < grid.size:
        chunk = grid[start : start + block]
        xs.extend(chunk)
        pes.extend(np.clip(np.asarray(func(chunk), dtype=float), 0.0, 1.0))
        start += block
        if start < grid.size and _can_stop(np.asarray(xs), np.asarray(pes), centre):
            break
    x = np.asarray(xs)
    return _finish(func, x, np.asarray(pes), xtol, axis, start >= grid.size)


def _can_stop(x: np.ndarray, pe: np.ndarray, centre: float | None) -> bool:
    if centre is None:
        return _has_closed_qualified(pe)
    return bool(np.any((x > centre) & (pe < THRESHOLD)))


def _has_closed_qualified(pe: np.ndarray) -> bool:
    above = pe >= THRESHOLD
    inside = False
    best = 0.0
    for v, up in zip(pe, above):
        if up:
            inside = True
            best = max(best, v)
        elif inside:
            if best >= QUALIFY:
                return True
            inside = False
            best = 0.0
    return False


def _finish(func, x, pe, xtol, axis, complete) -> ScanCurve:
    above = pe >= THRESHOLD
    idx = np.flatnonzero(above[:-1] != above[1:])
    if idx.size:
        crossings, refined = _bisect_crossings(func, x, pe, idx, xtol)
    else:
        crossings, refined = [], np.empty((0, 2))
    return ScanCurve(axis, x, pe, tuple(crossings), refined, complete)


def robust_intervals(curve: ScanCurve) -> list[RobustInterval]:
    """All intervals with p_e >= 0.99, in ascending order, with their qualification."""
    if curve.x.size == 0:
        return []
    xs = np.concatenate([curve.x, curve.refined[:, 0]])
    ps = np.concatenate([curve.pe, curve.refined[:, 1]])
    out: list[RobustInterval] = []
    inside = bool(curve.pe[0] >= THRESHOLD)
    start, open_start = float(curve.x[0]), True
    for c in curve.crossings:
        if c.rising and not inside:
            start, open_start, inside = c.x, False, True
        elif not c.rising and inside:
            out.append(_interval(start, c.x, open_start, False, xs, ps))
            inside = False
    if inside:
        out.append(_interval(start, float(curve.x[-1]), open_start, True, xs, ps))
    return out


def _interval(start, end, open_start, open_end, xs, ps) -> RobustInterval:
    mask = (xs >= start) & (xs <= end)
    qualified = bool(np.any(ps[mask] >= QUALIFY))
    return RobustInterval(float(start), float(end), qualified, open_start, open_end)


def first_qualified(curve: ScanCurve) -> RobustInterval | None:
    for iv in robust_intervals(curve):
        if iv.qualified:
            return iv
    return None


def robustness_width(curve: ScanCurve) -> float:
    """Width of the first qualified 0.99 interval; 0 if there is none."""
    iv = first_qualified(curve)
    return iv.width if iv else 0.0


def qualified_at(curve: ScanCurve, x0: float = 0.0) -> RobustInterval | None:
    """The qualified 0.99 interval containing ``x0``, if there is one."""
    for iv in robust_intervals(curve):
        if iv.start <= x0 <= iv.end:
            return iv if iv.qualified else None
    return None


def centred_width(curve: ScanCurve, x0: float = 0.0) -> float:
    """Width of the qualified interval containing ``x0``; 0 if there is none."""
    iv = qualified_at(curve, x0)
    return iv.width if iv else 0.0


def refined_max(values: np.ndarray) -> float:
    """Grid maximum improved by the vertex of a parabola through the argmax and its neighbours."""
    v = np.asarray(values, dtype=float)
    i = int(np.argmax(v))
    best = float(v[i])
    if 0 < i < v.size - 1:
        y0, y1, y2 = v[i - 1], v[i], v[i + 1]
        curv = y0 - 2.0 * y1 + y2
        if curv < 0:
            vertex = y1 - (y2 - y0) ** 2 / (8.0 * curv)
            best = float(min(max(vertex, y1), 1.0))
    return best


def max_transient_pf(traj: QutritTrajectory) -> float:
    return refined_max(traj.p_f)


def detuning_scan(
    model: PulseModel,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    config: ScanConfig = ScanConfig(),
    stop_after_qualified: bool = False,
    centre: float | None = None,
) -> ScanCurve:
    def pe_at(deltas):
        return final_populations(
            model, constants, deltas=deltas, rtol=config.rtol, atol=config.atol, threads=config.threads
        )[:, 1]

    return scan_function(pe_at, config.grid(), config.xtol, DETUNING_AXIS, stop_after_qualified, centre=centre)


def amplitude_scan(
    model: PulseModel,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    config: AmplitudeScanConfig = AmplitudeScanConfig(),
) -> ScanCurve:
    shifted = model.with_delta(config.delta)

    def pe_at(omegas):
        return final_populations(
            shifted, constants, omega0s=omegas, rtol=config.rtol, atol=config.atol, threads=config.threads
        )[:, 1]

    return scan_function(pe_at, config.grid(), config.xtol, AMPLITUDE_AXIS)


@dataclass(frozen=True)
class ObjectivePoint:
    max_pf: float
    det_rob: float
    feasible: bool
    violation: float = 0.0  # 1 - p_e(delta = 0) for infeasible pulses, 0 otherwise

    @classmethod
    def failed(cls) -> ObjectivePoint:
        return cls(1.0, 0.0, False, 1.0)


def objectives(
    model: PulseModel,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    scan_config: ScanConfig = ScanConfig(),
) -> ObjectivePoint:
    """(max_t p_f at delta = 0, detuning robustness, feasibility) for one pulse."""
    traj = evolve(model, 0.0, constants, rtol=scan_config.rtol, atol=scan_config.atol)
    max_pf = max_transient_pf(traj)
    pe0 = float(traj.final_populations[1])
    # no interval can contain delta = 0 if the nominal pulse misses the threshold
    width = detuning_robustness(model, constants, scan_config) if pe0 >= THRESHOLD else 0.0
    if width > 0:
        return ObjectivePoint(max_pf, width, True)
    return ObjectivePoint(max_pf, 0.0, False, max(1.0 - pe0, 1e-12))


def detuning_robustness(
    model: PulseModel,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    scan_config: ScanConfig = ScanConfig(),
) -> float:
    """Width of the qualified detuning interval around delta = 0 (0 if the pulse fails at resonance)."""
    curve = detuning_scan(model, constants, scan_config, stop_after_qualified=True, centre=0.0)
    return centred_width(curve)


def amplitude_robustness(
    model: PulseModel,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    config: AmplitudeScanConfig = AmplitudeScanConfig(),
) -> float:
    """Width of the qualified amplitude interval containing the pulse's own Omega0 (0 if none)."""
    return centred_width(amplitude_scan(model, constants, config), model.envelope.omega0)
