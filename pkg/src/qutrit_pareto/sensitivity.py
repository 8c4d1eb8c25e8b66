"""One-at-a-time Morris screening around Pareto-optimal pulses.

Each gene is shrunk towards zero by a small relative step and the change of an
output is expressed as a relative elementary effect. By default the step is
measured in magnitude, ``|x'_i| - |x_i|``, so that an effect of +1 always means
"the output grows with the size of the parameter" whatever the parameter's
sign. ``signed_step=True`` divides by ``x'_i - x_i`` instead.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qutrit_pareto.dynamics import DEFAULT_CONSTANTS, IntegrationError, PhysicsConstants, evolve
from qutrit_pareto.metrics import (
    AmplitudeScanConfig,
    ScanConfig,
    amplitude_robustness,
    detuning_robustness,
    max_transient_pf,
)
from qutrit_pareto.pareto import ParetoArchive
from qutrit_pareto.pulses import PulseModel, model_from_vector, parameter_names

REL_STEP = 5e-5
EXCLUSION_FLAG = 0.2
OUTPUTS = ("max_pf", "det_rob", "amp_rob")
TABLE_COLUMNS = ("omega0", "n", "beta_epsilon", "k1", "k2", "k3", "k4", "k5", "gamma1", "gamma2")
SCATTER_HEADER = ["model", "T_ns", "param", "mu_star", "sigma"]


class UndefinedEffectError(ArithmeticError):
    """The unperturbed output is zero, so a relative effect does not exist."""


class ZeroBaseError(ArithmeticError):
    """The parameter is exactly zero and cannot be shrunk by a relative step."""


class InsufficientSamplesError(ValueError):
    """Fewer than two valid elementary effects."""


def relative_elementary_effect(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    index: int,
    rel_step: float = REL_STEP,
    f0: float | None = None,
    signed_step: bool = False,
) -> float:
    """Relative elementary effect of gene ``index`` for a decrease of its magnitude by ``rel_step``."""
    x = np.asarray(x, dtype=float)
    xi = x[index]
    if xi == 0.0:
        raise ZeroBaseError(f"gene {index} is zero")
    base = f(x) if f0 is None else f0
    if base == 0.0:
        raise UndefinedEffectError("unperturbed output is zero")
    xp = x.copy()
    xp[index] = xi * (1.0 - rel_step)
    step = xp[index] - xi if signed_step else abs(xp[index]) - abs(xi)
    return (f(xp) - base) / step / base


@dataclass(frozen=True)
class MorrisSummary:
    mu_star: float
    sigma: float
    mu: float
    ratio: float
    n: int


def morris_summary(effects: Sequence[float]) -> MorrisSummary:
    e = np.asarray(effects, dtype=float)
    if e.size < 2:
        raise InsufficientSamplesError(f"need at least 2 elementary effects, got {e.size}")
    mu_star = float(np.mean(np.abs(e)))
    mu = float(np.mean(e))
    sigma = float(np.std(e, ddof=1))
    if mu_star == 0.0:
        ratio = 0.0
    elif np.all(e > 0):
        ratio = 1.0
    elif np.all(e < 0):
        ratio = -1.0
    else:
        # mixed signs: keep strictly inside (-1, 1) even when rounding says otherwise
        ratio = float(np.clip(mu / mu_star, np.nextafter(-1.0, 0.0), np.nextafter(1.0, 0.0)))
    return MorrisSummary(mu_star, sigma, mu, ratio, int(e.size))


@dataclass(frozen=True)
class SensitivityRecord:
    model: str
    T: float
    output: str
    param: str
    mu_star: float
    sigma: float
    mu: float
    ratio: float
    n: int
    excluded: int = 0

    @property
    def flagged(self) -> bool:
        total = self.n + self.excluded
        return total > 0 and self.excluded / total > EXCLUSION_FLAG


def output_functionals(
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    scan_config: ScanConfig | None = None,
    amp_config: AmplitudeScanConfig | None = None,
) -> dict[str, Callable[[PulseModel], float]]:
    """Output name -> functional of a pulse.

    Widths are resolved far below the relative step so that the finite
    difference is not dominated by the crossing tolerance.
    """
    scan_config = scan_config or ScanConfig(xtol=1e-10)
    amp_config = amp_config or AmplitudeScanConfig(xtol=1e-10)

    def max_pf(m: PulseModel) -> float:
        return max_transient_pf(evolve(m, 0.0, constants, rtol=scan_config.rtol, atol=scan_config.atol))

    def det_rob(m: PulseModel) -> float:
        return detuning_robustness(m, constants, scan_config)

    def amp_rob(m: PulseModel) -> float:
        return amplitude_robustness(m, constants, amp_config)

    return {"max_pf": max_pf, "det_rob": det_rob, "amp_rob": amp_rob}


def select_base_points(archive: ParetoArchive, n: int) -> list[np.ndarray]:
    """``n`` front entries evenly spread along det_rob (all of them if the front is smaller)."""
    front = archive.front
    if len(front) <= n:
        return [e.genes for e in front]
    idx = np.unique(np.round(np.linspace(0, len(front) - 1, n)).astype(int))
    return [front[i].genes for i in idx]


_EXCLUDED = (UndefinedEffectError, ZeroBaseError, IntegrationError, ValueError)


def _effects_for(
    f: Callable[[np.ndarray], float], bases: list[np.ndarray], n_genes: int, rel_step: float,
    signed_step: bool, threads: int,
) -> tuple[list[list[float]], list[int]]:
    def base_value(x):
        try:
            return f(x)
        except _EXCLUDED:
            return 0.0

    def one(task):
        x, i, f0 = task
        try:
            return relative_elementary_effect(f, x, i, rel_step, f0, signed_step)
        except _EXCLUDED:
            return None

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        mapper = pool.map if pool else map
        f0s = list(mapper(base_value, bases))
        tasks = [(x, i, f0) for x, f0 in zip(bases, f0s) for i in range(n_genes)]
        results = list(mapper(one, tasks))
    finally:
        if pool:
            pool.shutdown()
    effects: list[list[float]] = [[] for _ in range(n_genes)]
    excluded = [0] * n_genes
    for (_, i, _), r in zip(tasks, results):
        if r is None or not math.isfinite(r):
            excluded[i] += 1
        else:
            effects[i].append(r)
    return effects, excluded


def morris_study(
    archive: ParetoArchive,
    outputs: Iterable[str] = OUTPUTS,
    n: int = 175,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    functionals: dict[str, Callable[[PulseModel], float]] | None = None,
    rel_step: float = REL_STEP,
    signed_step: bool = False,
    threads: int = 1,
) -> list[SensitivityRecord]:
    """Morris statistics per (output, parameter) over the archive's Pareto-optimal pulses."""
    funcs = functionals or output_functionals(constants)
    names = parameter_names(archive.family)
    bases = select_base_points(archive, n)
    records = []
    for out in outputs:
        if out not in funcs:
            raise ValueError(f"unknown output {out!r}; expected one of {sorted(funcs)}")
        model_fn = funcs[out]

        def f(x, model_fn=model_fn):
            return model_fn(model_from_vector(archive.family, x, archive.T))

        effects, excluded = _effects_for(f, bases, len(names), rel_step, signed_step, threads)
        for name, e, ex in zip(names, effects, excluded):
            if len(e) >= 2:
                s = morris_summary(e)
                records.append(
                    SensitivityRecord(archive.family, archive.T, out, name, s.mu_star, s.sigma, s.mu, s.ratio, s.n, ex)
                )
            else:
                nan = math.nan
                records.append(SensitivityRecord(archive.family, archive.T, out, name, nan, nan, nan, nan, len(e), ex))
    return records


def _column(param: str) -> str:
    return "beta_epsilon" if param in ("beta", "epsilon") else param


def write_ratio_table(records: Sequence[SensitivityRecord], output: str, path: str | Path) -> None:
    """mu/mu* table: one row per model and duration, empty cells for absent parameters."""
    rows: dict[tuple[str, float], dict[str, str]] = {}
    for r in records:
        if r.output != output:
            continue
        row = rows.setdefault((r.model, r.T), {})
        row[_column(r.param)] = "" if math.isnan(r.ratio) else f"{r.ratio:.4f}"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", *TABLE_COLUMNS])
        for (model, T), row in rows.items():
            w.writerow([f"{model} ({T:g} ns)", *(row.get(c, "") for c in TABLE_COLUMNS)])


def write_scatter(records: Sequence[SensitivityRecord], output: str, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCATTER_HEADER)
        for r in records:
            if r.output == output:
                w.writerow([r.model, repr(r.T), r.param, repr(r.mu_star), repr(r.sigma)])


def write_records(records: Sequence[SensitivityRecord], path: str | Path) -> None:
    """Full record dump including exclusion counts and flags."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "T_ns", "output", "param", "mu_star", "sigma", "mu", "ratio", "N", "excluded", "flagged"])
        for r in records:
            w.writerow(
                [r.model, repr(r.T), r.output, r.param, repr(r.mu_star), repr(r.sigma), repr(r.mu), repr(r.ratio),
                 r.n, r.excluded, int(r.flagged)]
            )
