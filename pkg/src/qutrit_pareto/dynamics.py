"""Three-level ladder dynamics under a frequency-modulated drive.

Unit convention
---------------
Frequencies (Omega, Delta, k, E_C/h) are stored in GHz, i.e. cycles per ns.
The Hamiltonian returned by :func:`hamiltonian` is H/h in GHz and the
Schroedinger equation is integrated as ``i dpsi/dt = 2*pi*(H/h) psi`` with t in
ns. Under the alternative "GHz as rad/ns" reading the published pulses are far
from adiabatic (Landau-Zener Gamma ~ 0.2) and cannot reach p_e >= 0.99.

``PhysicsConstants.detuning_sign`` selects how the detuning enters the
Hamiltonian. ``+1`` places -Delta on |g> and Delta - E_C on |f>, so the
two-photon g-f resonance sits at Delta = +E_C/2; ``-1`` (default) mirrors it to
Delta = -E_C/2, which is the orientation in which the published SECH3 pulses
(k1 < 0 at maximum robustness) avoid the two-photon resonance.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qutrit_pareto import _kernels as K
from qutrit_pareto.pulses import PulseModel, pack

DEFAULT_RTOL = 5e-10
DEFAULT_ATOL = 1e-12
DEFAULT_GRID = 2001
MAX_STEPS = 2_000_000

TRAJECTORY_HEADER = ["t_ns", "p_g", "p_e", "p_f", "re_cg", "im_cg", "re_ce", "im_ce", "re_cf", "im_cf"]


@dataclass(frozen=True)
class PhysicsConstants:
    E_C_over_h: float = 0.3
    coupling_ratio: float = math.sqrt(2.0)
    detuning_sign: float = -1.0


DEFAULT_CONSTANTS = PhysicsConstants()


class IntegrationError(RuntimeError):
    """The adaptive integrator could not finish the pulse."""

    def __init__(self, message: str, t_fail: float, delta: float | None = None):
        super().__init__(message)
        self.t_fail = t_fail
        self.delta = delta


class TrackingError(RuntimeError):
    """Eigenbranch continuation became ambiguous."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


def hamiltonian(omega: float, delta_t: float, constants: PhysicsConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Rotating-frame ladder Hamiltonian H/h in GHz (real symmetric)."""
    d = constants.detuning_sign * delta_t
    h01 = 0.5 * omega
    h12 = 0.5 * constants.coupling_ratio * omega
    return np.array(
        [
            [-d, h01, 0.0],
            [h01, 0.0, h12],
            [0.0, h12, d - constants.E_C_over_h],
        ]
    )


def hamiltonian_batch(omega: np.ndarray, delta_t: np.ndarray, constants: PhysicsConstants) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    d = constants.detuning_sign * np.asarray(delta_t, dtype=float)
    H = np.zeros(omega.shape + (3, 3))
    H[..., 0, 0] = -d
    H[..., 0, 1] = H[..., 1, 0] = 0.5 * omega
    H[..., 1, 2] = H[..., 2, 1] = 0.5 * constants.coupling_ratio * omega
    H[..., 2, 2] = d - constants.E_C_over_h
    return H


def pack_model(
    model: PulseModel,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    *,
    delta: float | None = None,
    omega0: float | None = None,
) -> np.ndarray:
    return pack(
        model,
        delta=delta,
        omega0=omega0,
        E_C=constants.E_C_over_h,
        coupling_ratio=constants.coupling_ratio,
        detuning_sign=constants.detuning_sign,
    )


@dataclass(frozen=True)
class QutritTrajectory:
    times: np.ndarray
    amplitudes: np.ndarray  # (N, 3) complex: c_g, c_e, c_f
    model: PulseModel
    delta: float
    n_rhs: int = 0

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def p_g(self) -> np.ndarray:
        return self.populations[:, 0]

    @property
    def p_e(self) -> np.ndarray:
        return self.populations[:, 1]

    @property
    def p_f(self) -> np.ndarray:
        return self.populations[:, 2]

    @property
    def final_populations(self) -> np.ndarray:
        return self.populations[-1]

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.populations.sum(axis=1) - 1.0)))

    def to_csv(self, path: str | Path) -> None:
        pops = self.populations
        a = self.amplitudes
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_HEADER)
            for i, t in enumerate(self.times):
                w.writerow(
                    [
                        repr(float(t)),
                        *(repr(float(v)) for v in pops[i]),
                        *(repr(float(v)) for c in a[i] for v in (c.real, c.imag)),
                    ]
                )


def evolve(
    model: PulseModel,
    delta: float | None = None,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    n_points: int = DEFAULT_GRID,
    psi0=None,
) -> QutritTrajectory:
    """Integrate the pulse from |g> (or ``psi0``) over [-T/2, T/2].

    The state is reported on ``n_points`` uniformly spaced times via the
    integrator's dense output.
    """
    d = model.delta if delta is None else float(delta)
    p = pack_model(model, constants, delta=d)
    y0 = np.array([1.0, 0.0, 0.0], dtype=complex) if psi0 is None else np.asarray(psi0, dtype=complex).copy()
    times = np.linspace(-0.5 * model.T, 0.5 * model.T, n_points)
    y_out = np.empty((n_points, 3), dtype=complex)
    _, status, t_fail, nfev = K.propagate(p, y0, rtol, atol, times, y_out, MAX_STEPS)
    if status != K.STATUS_OK:
        raise IntegrationError(_failure_message(status, t_fail, d), t_fail, d)
    return QutritTrajectory(times, y_out, model, d, int(nfev))


def _failure_message(status: int, t_fail: float, delta: float) -> str:
    why = "step size underflow" if status == K.STATUS_STEP_UNDERFLOW else "step budget exhausted"
    return f"integration failed at t = {t_fail:.6g} ns (delta = {delta:.6g} GHz): {why}"


def final_populations_batch(
    pbatch: np.ndarray,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """End-of-pulse populations for each packed pulse row, plus status and failure times."""
    pbatch = np.ascontiguousarray(pbatch, dtype=float)
    m = pbatch.shape[0]
    pops = np.zeros((m, 3))
    status = np.zeros(m, dtype=np.int64)
    t_fail = np.zeros(m)
    if threads <= 1 or m < 2 * threads:
        K.final_populations(pbatch, rtol, atol, MAX_STEPS, pops, status, t_fail)
    else:
        bounds = np.linspace(0, m, threads + 1).astype(int)

        def work(lo: int, hi: int) -> None:
            K.final_populations(pbatch[lo:hi], rtol, atol, MAX_STEPS, pops[lo:hi], status[lo:hi], t_fail[lo:hi])

        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, bounds[:-1], bounds[1:]))
    return pops, status, t_fail


def final_populations(
    model: PulseModel,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    *,
    deltas=None,
    omega0s=None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    threads: int = 1,
) -> np.ndarray:
    """Final (p_g, p_e, p_f) for a sweep over the offset or over the amplitude.

    Exactly one of ``deltas`` / ``omega0s`` may be given; with neither, the
    model is run once at its own offset.
    """
    if deltas is not None and omega0s is not None:
        raise ValueError("sweep either deltas or omega0s, not both")
    base = pack_model(model, constants)
    if deltas is not None:
        xs = np.atleast_1d(np.asarray(deltas, dtype=float))
        col = K.P_DELTA
    elif omega0s is not None:
        xs = np.atleast_1d(np.asarray(omega0s, dtype=float))
        col = K.P_OMEGA0
    else:
        xs = np.array([model.delta])
        col = K.P_DELTA
    pbatch = np.repeat(base[None, :], xs.size, axis=0)
    pbatch[:, col] = xs
    pops, status, t_fail = final_populations_batch(pbatch, rtol, atol, threads)
    bad = np.flatnonzero(status != K.STATUS_OK)
    if bad.size:
        i = int(bad[0])
        d = float(pbatch[i, K.P_DELTA])
        raise IntegrationError(_failure_message(int(status[i]), float(t_fail[i]), d), float(t_fail[i]), d)
    return pops


@dataclass(frozen=True)
class AdiabaticTrajectory:
    times: np.ndarray
    p_f: np.ndarray
    energies: np.ndarray  # tracked eigenvalue, GHz
    vectors: np.ndarray  # (N, 3) tracked eigenvector, phase-fixed

    @property
    def max_pf(self) -> float:
        return float(self.p_f.max())


def adiabatic_pf_trajectory(
    model: PulseModel,
    delta: float | None = None,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    n_points: int = DEFAULT_GRID,
) -> AdiabaticTrajectory:
    """|f> weight of the instantaneous eigenstate continuously connected to |g> at -T/2."""
    d = model.delta if delta is None else float(delta)
    times = np.linspace(-0.5 * model.T, 0.5 * model.T, n_points)
    p = pack_model(model, constants, delta=d)
    omega = K.envelope_array(p, times)
    det = K.detuning_array(p, times)
    evals, evecs = np.linalg.eigh(hamiltonian_batch(omega, det, constants))
    vec = np.empty((n_points, 3))
    energy = np.empty(n_points)
    j = int(np.argmax(np.abs(evecs[0, 0, :])))
    v = evecs[0, :, j]
    v = v if v[0] >= 0 else -v
    vec[0], energy[0] = v, evals[0, j]
    threshold = 1.0 / math.sqrt(2.0)
    for i in range(1, n_points):
        overlaps = vec[i - 1] @ evecs[i]
        j = int(np.argmax(np.abs(overlaps)))
        if abs(overlaps[j]) < threshold:
            raise TrackingError(
                f"eigenbranch continuation ambiguous at t = {times[i]:.6g} ns "
                f"(best overlap {abs(overlaps[j]):.3f})",
                float(times[i]),
            )
        v = evecs[i, :, j]
        vec[i] = v if overlaps[j] > 0 else -v
        energy[i] = evals[i, j]
    return AdiabaticTrajectory(times, vec[:, 2] ** 2, energy, vec)
