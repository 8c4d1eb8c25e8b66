"""Landau-Zener robustness bounds and the adiabatic-limit leakage band.

In the 2*pi convention of :mod:`qutrit_pareto.dynamics` the adiabaticity
parameter of a g-e crossing is ``Gamma = 2*pi * Omega(t0)^2 / (4 |Delta'(t0)|)``
with Omega in GHz and Delta' in GHz/ns, and the diabatic probability is
``exp(-2*pi*Gamma)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from qutrit_pareto.dynamics import (
    DEFAULT_CONSTANTS,
    DEFAULT_GRID,
    PhysicsConstants,
    adiabatic_pf_trajectory,
)
from qutrit_pareto.pulses import DetuningParams, PulseModel, detuning_rate, detuning_value, envelope_value

P_THRESH = 0.99
CONSTRAINED_LEVEL = 0.999
ROOT_SAMPLES = 4001
BAND_HEADER = ["det_rob_LZ_GHz", "max_pf_adiabatic", "model", "T_ns", "constrained_flag"]


class NoCrossingError(ValueError):
    """The detuning has no zero inside the pulse window."""


class DegenerateVelocityError(ValueError):
    """The detuning touches zero with vanishing slope."""


def gamma_threshold(p_thresh: float = P_THRESH) -> float:
    """Gamma at which 1 - exp(-2*pi*Gamma) equals ``p_thresh``."""
    if not 0.0 < p_thresh < 1.0:
        raise ValueError(f"p_thresh must lie in (0, 1), got {p_thresh}")
    return math.log(1.0 / (1.0 - p_thresh)) / (2.0 * math.pi)


def crossing_roots(det: DetuningParams, delta: float, T: float, samples: int = ROOT_SAMPLES) -> list[float]:
    """Every zero of Delta(t) + delta on [-T/2, T/2] resolvable on ``samples`` points."""
    ts = np.linspace(-0.5 * T, 0.5 * T, samples)
    f = detuning_value(det, ts, T, delta)
    if not np.any(f):
        raise NoCrossingError("detuning vanishes identically; the crossing time is undefined")
    roots = [float(t) for t in ts[f == 0.0]]
    for i in np.flatnonzero(f[:-1] * f[1:] < 0):
        roots.append(brentq(lambda t: detuning_value(det, t, T, delta), ts[i], ts[i + 1], xtol=1e-12 * T))
    return sorted(roots)


def crossing_time(det: DetuningParams, delta: float, T: float) -> float:
    """Zero of the detuning nearest t = 0.

    Raises:
        NoCrossingError: the detuning keeps one sign across the pulse.
    """
    roots = crossing_roots(det, delta, T)
    if not roots:
        raise NoCrossingError(f"detuning has no zero in [-{T / 2:g}, {T / 2:g}] ns at delta = {delta:.6g} GHz")
    return min(roots, key=abs)


def lz_gamma(model: PulseModel, delta: float | None = None, constants: PhysicsConstants = DEFAULT_CONSTANTS) -> float:
    """Landau-Zener adiabaticity parameter at the crossing nearest t = 0.

    ``constants`` is accepted for symmetry with the simulation API; the g-e
    crossing does not depend on E_C, the e-f coupling or the detuning sign.
    """
    d = model.delta if delta is None else float(delta)
    t0 = crossing_time(model.detuning, d, model.T)
    omega = envelope_value(model.envelope, t0, model.T)
    if omega == 0.0:
        return 0.0
    v = detuning_rate(model.detuning, t0, model.T)
    if v == 0.0:
        raise DegenerateVelocityError(f"zero sweep rate at the crossing t0 = {t0:.6g} ns")
    return 2.0 * math.pi * omega**2 / (4.0 * abs(v))


def _gamma_or_limit(model: PulseModel, delta: float, constants: PhysicsConstants) -> float:
    try:
        return lz_gamma(model, delta, constants)
    except NoCrossingError:
        return 0.0
    except DegenerateVelocityError:
        return math.inf


@dataclass(frozen=True)
class LZBound:
    delta_minus: float
    delta_plus: float
    model: PulseModel
    constants: PhysicsConstants = DEFAULT_CONSTANTS
    p_thresh: float = P_THRESH
    constrained: bool = False  # 1 - exp(-2*pi*Gamma) >= 0.999 somewhere inside the interval
    unbounded: bool = False  # the walk reached the search limit
    gamma_zero: float = 0.0

    @property
    def width(self) -> float:
        return self.delta_plus - self.delta_minus

    @property
    def feasible(self) -> bool:
        return self.width > 0

    def gamma_at(self, delta: float) -> float:
        return _gamma_or_limit(self.model, delta, self.constants)


def lz_robustness(
    model: PulseModel,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    p_thresh: float = P_THRESH,
    step: float = 1e-3,
    xtol: float = 1e-5,
    delta_max: float = 1.0,
) -> LZBound:
    """Offsets delta_- < 0 < delta_+ where the LZ transfer probability falls to ``p_thresh``.

    Walks outward from delta = 0 on a ``step`` grid and bisects each boundary
    to ``xtol``. An unreachable threshold at delta = 0 gives a zero-width bound.
    """
    g_thr = gamma_threshold(p_thresh)
    g0 = _gamma_or_limit(model, 0.0, constants)
    if not g0 >= g_thr:
        return LZBound(0.0, 0.0, model, constants, p_thresh, False, False, g0)
    best = g0
    edges = []
    hit_limit = False
    for sign in (1.0, -1.0):
        inside = 0.0
        outside = None
        k = 1
        while True:
            d = sign * min(k * step, delta_max)
            g = _gamma_or_limit(model, d, constants)
            if g < g_thr:
                outside = d
                break
            best = max(best, g)
            inside = d
            if abs(d) >= delta_max:
                break
            k += 1
        if outside is None:
            hit_limit = True
            edges.append(inside)
            continue
        a, b = inside, outside
        while abs(b - a) > xtol:
            m = 0.5 * (a + b)
            g = _gamma_or_limit(model, m, constants)
            if g >= g_thr:
                a = m
                best = max(best, g)
            else:
                b = m
        edges.append(0.5 * (a + b))
    delta_plus, delta_minus = edges
    constrained = 1.0 - math.exp(-2.0 * math.pi * best) >= CONSTRAINED_LEVEL
    return LZBound(delta_minus, delta_plus, model, constants, p_thresh, constrained, hit_limit, g0)


@dataclass(frozen=True)
class BandPoint:
    det_rob_lz: float
    max_pf_adiabatic: float
    model: str
    T: float
    constrained: bool


@dataclass(frozen=True)
class BandEnvelope:
    """Binned min/max envelope of band points for one duration."""

    T: float
    edges: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def contains(self, det_rob: float, max_pf: float, slack: float = 0.0) -> bool:
        if det_rob < self.edges[0] or det_rob > self.edges[-1]:
            return False
        i = min(int(np.searchsorted(self.edges, det_rob, side="right")) - 1, self.lower.size - 1)
        lo, hi = self.lower[i], self.upper[i]
        if not np.isfinite(lo):
            return False
        return lo - slack <= max_pf <= hi + slack


@dataclass
class AdiabaticBand:
    points: list[BandPoint] = field(default_factory=list)
    construction: str = "binned min/max envelope over det_rob_LZ"

    def envelope(self, T: float, bins: int = 20) -> BandEnvelope:
        pts = [p for p in self.points if p.T == T]
        if not pts:
            raise ValueError(f"no band points for T = {T} ns")
        x = np.array([p.det_rob_lz for p in pts])
        y = np.array([p.max_pf_adiabatic for p in pts])
        hi = x.max() if x.max() > x.min() else x.min() + 1e-12
        edges = np.linspace(x.min(), hi, bins + 1)
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
        lower = np.full(bins, np.inf)
        upper = np.full(bins, -np.inf)
        np.minimum.at(lower, idx, y)
        np.maximum.at(upper, idx, y)
        return BandEnvelope(T, edges, lower, upper)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(BAND_HEADER)
            for p in self.points:
                w.writerow([repr(p.det_rob_lz), repr(p.max_pf_adiabatic), p.model, repr(p.T), int(p.constrained)])


def band_point(
    model: PulseModel,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    n_points: int = DEFAULT_GRID,
) -> BandPoint:
    bound = lz_robustness(model, constants)
    traj = adiabatic_pf_trajectory(model, 0.0, constants, n_points)
    return BandPoint(bound.width, traj.max_pf, model.name, model.T, bound.constrained)


def adiabatic_band(
    models: list[PulseModel],
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    n_points: int = DEFAULT_GRID,
) -> AdiabaticBand:
    """Pair each model's LZ width with its adiabatic-limit max p_f at delta = 0."""
    return AdiabaticBand([band_point(m, constants, n_points) for m in models])
