"""NSGA-II over pulse parameters: minimise max_t p_f, maximise detuning robustness.

Internally every candidate carries a minimisation vector ``(max_pf, -det_rob)``
and a feasibility flag. Constraint domination ranks every feasible candidate
above every infeasible one, and an infeasible candidate above another with a
larger constraint violation.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from qutrit_pareto.dynamics import DEFAULT_CONSTANTS, IntegrationError, PhysicsConstants
from qutrit_pareto.metrics import (
    AmplitudeScanConfig,
    ObjectivePoint,
    ScanConfig,
    amplitude_robustness,
    objectives,
)
from qutrit_pareto.pulses import PulseModel, model_from_vector, parameter_names, search_box

log = logging.getLogger(__name__)

ARCHIVE_FILE = "archive.csv"
MANIFEST_FILE = "manifest.json"
HV_LOG_FILE = "hypervolume.csv"
EMPTY_FRONT = "EMPTY_FRONT"
HV_REFERENCE = (1.0, 0.0)  # (max_pf, -det_rob) nadir


# --- dominance, sorting, crowding -------------------------------------------


def dominates(a: ObjectivePoint, b: ObjectivePoint) -> bool:
    """Constraint domination: feasibility, then violation, then Pareto order on (max_pf down, det_rob up)."""
    if a.feasible != b.feasible:
        return a.feasible
    if not a.feasible and a.violation != b.violation:
        return a.violation < b.violation
    no_worse = a.max_pf <= b.max_pf and a.det_rob >= b.det_rob
    better = a.max_pf < b.max_pf or a.det_rob > b.det_rob
    return no_worse and better


def _as_arrays(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = list(points)
    F = np.array([[p.max_pf, -p.det_rob] for p in pts], dtype=float).reshape(-1, 2)
    feas = np.array([p.feasible for p in pts], dtype=bool)
    viol = np.array([p.violation for p in pts], dtype=float)
    return F, feas, viol


def dominance_matrix(
    F: np.ndarray, feasible: np.ndarray | None = None, violation: np.ndarray | None = None
) -> np.ndarray:
    """D[i, j] is True iff i constraint-dominates j (all columns minimised)."""
    F = np.asarray(F, dtype=float)
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    D = le & lt
    if feasible is not None:
        fe = np.asarray(feasible, dtype=bool)
        if violation is not None:
            v = np.asarray(violation, dtype=float)
            both_bad = ~fe[:, None] & ~fe[None, :] & (v[:, None] != v[None, :])
            D = np.where(both_bad, v[:, None] < v[None, :], D)
        D = np.where(fe[:, None] != fe[None, :], fe[:, None] & ~fe[None, :], D)
    return D


def non_dominated_sort(
    points, feasible: np.ndarray | None = None, violation: np.ndarray | None = None
) -> list[list[int]]:
    """Fronts of indices, best first.

    ``points`` is either a sequence of :class:`ObjectivePoint` or an (m, k)
    array of minimised objectives (with optional feasibility and violation
    arrays; violations only order infeasible rows).
    """
    if isinstance(points, np.ndarray):
        F, feas, viol = np.asarray(points, dtype=float), feasible, violation
    else:
        F, feas, viol = _as_arrays(points)
    m = F.shape[0]
    if m == 0:
        return []
    D = dominance_matrix(F, feas, viol)
    count = D.sum(axis=0)
    fronts: list[list[int]] = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append([int(i) for i in current])
        count = count - D[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def crowding_distance(F: np.ndarray) -> np.ndarray:
    """Crowding distance of each row of a front of minimised objectives."""
    F = np.asarray(F, dtype=float).reshape(len(F), -1)
    m, k = F.shape
    dist = np.zeros(m)
    if m <= 2:
        dist[:] = np.inf
        return dist
    for j in range(k):
        order = np.argsort(F[:, j], kind="stable")
        col = F[order, j]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def hypervolume_2d(F: np.ndarray, reference: Sequence[float] = HV_REFERENCE) -> float:
    """Area dominated by the rows of ``F`` (both columns minimised) up to ``reference``."""
    F = np.asarray(F, dtype=float).reshape(-1, 2)
    r0, r1 = reference
    F = F[(F[:, 0] < r0) & (F[:, 1] < r1)]
    if F.size == 0:
        return 0.0
    F = F[np.lexsort((F[:, 1], F[:, 0]))]
    area = 0.0
    best1 = r1
    for x, y in F:
        if y < best1:
            area += (r0 - x) * (best1 - y)
            best1 = y
    return float(area)


# --- variation operators ------------------------------------------------------


def sbx_crossover(
    p1: np.ndarray, p2: np.ndarray, lower: np.ndarray, upper: np.ndarray, eta: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Bounded simulated-binary crossover, applied per gene with probability 1/2."""
    c1, c2 = p1.copy(), p2.copy()
    for i in range(p1.size):
        if rng.random() > 0.5 or abs(p1[i] - p2[i]) < 1e-14:
            continue
        y1, y2 = min(p1[i], p2[i]), max(p1[i], p2[i])
        lo, hi = lower[i], upper[i]
        u = rng.random()
        children = []
        for spread in (y1 - lo, hi - y2):
            beta = 1.0 + 2.0 * spread / (y2 - y1)
            alpha = 2.0 - beta ** (-(eta + 1.0))
            if u <= 1.0 / alpha:
                bq = (u * alpha) ** (1.0 / (eta + 1.0))
            else:
                bq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
            children.append(bq)
        a = 0.5 * ((y1 + y2) - children[0] * (y2 - y1))
        b = 0.5 * ((y1 + y2) + children[1] * (y2 - y1))
        a, b = min(max(a, lo), hi), min(max(b, lo), hi)
        if rng.random() <= 0.5:
            a, b = b, a
        c1[i], c2[i] = a, b
    return c1, c2


def polynomial_mutation(
    x: np.ndarray, lower: np.ndarray, upper: np.ndarray, eta: float, prob: float, rng: np.random.Generator
) -> np.ndarray:
    """Bounded polynomial mutation; results are clamped to the box."""
    y = x.copy()
    for i in range(x.size):
        if rng.random() > prob:
            continue
        lo, hi = lower[i], upper[i]
        span = hi - lo
        if span <= 0:
            continue
        d1 = (y[i] - lo) / span
        d2 = (hi - y[i]) / span
        u = rng.random()
        p = 1.0 / (eta + 1.0)
        if u < 0.5:
            xy = 1.0 - d1
            val = 2.0 * u + (1.0 - 2.0 * u) * xy ** (eta + 1.0)
            dq = val**p - 1.0
        else:
            xy = 1.0 - d2
            val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy ** (eta + 1.0)
            dq = 1.0 - val**p
        y[i] = min(max(y[i] + dq * span, lo), hi)
    return y


# --- configuration and archive ------------------------------------------------


@dataclass(frozen=True)
class GAConfig:
    population: int = 96
    generations: int = 60
    crossover_prob: float = 0.9
    eta_crossover: float = 15.0
    mutation_prob: float | None = None  # None -> 1 / number of genes
    eta_mutation: float = 20.0
    stagnation_window: int = 25
    stagnation_rtol: float = 1e-6

    def __post_init__(self):
        if self.population < 8 or self.population % 2:
            raise ValueError(f"population must be even and >= 8, got {self.population}")
        if self.generations < 0:
            raise ValueError("generations must be nonnegative")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if self.eta_crossover <= 0 or self.eta_mutation <= 0:
            raise ValueError("distribution indices must be positive")
        if self.stagnation_window < 1:
            raise ValueError("stagnation_window must be >= 1")

    @classmethod
    def for_duration(cls, T: float, **overrides) -> GAConfig:
        """Default budget: 60 generations for short pulses, 80 for T >= 100 ns."""
        base = {"generations": 80 if T >= 100.0 else 60}
        base.update(overrides)
        return cls(**base)


@dataclass
class ArchiveEntry:
    genes: np.ndarray
    objective: ObjectivePoint
    rank: int
    crowding: float
    amp_rob: float = math.nan


@dataclass
class ParetoArchive:
    family: str
    T: float
    seed: int
    entries: list[ArchiveEntry]
    config: GAConfig
    generations_run: int = 0
    stop_reason: str = "budget"
    hv_log: list[dict] = field(default_factory=list)
    n_evaluations: int = 0
    failures: list[dict] = field(default_factory=list)

    @property
    def gene_names(self) -> tuple[str, ...]:
        return parameter_names(self.family)

    @property
    def front(self) -> list[ArchiveEntry]:
        """Feasible rank-1 entries, det_rob ascending, duplicates removed."""
        seen = set()
        out = []
        for e in self.entries:
            if e.rank != 1 or not e.objective.feasible:
                continue
            key = genome_key(e.genes)
            if key in seen:
                continue
            seen.add(key)
            out.append(e)
        out.sort(key=lambda e: (e.objective.det_rob, e.objective.max_pf))
        return out

    def front_models(self) -> list[PulseModel]:
        return [model_from_vector(self.family, e.genes, self.T) for e in self.front]

    def objective_array(self) -> np.ndarray:
        """(max_pf, det_rob) of the front."""
        return np.array([[e.objective.max_pf, e.objective.det_rob] for e in self.front]).reshape(-1, 2)


def genome_key(genes: np.ndarray) -> tuple[float, ...]:
    return tuple(float(f"{g:.12g}") for g in genes)


# --- evaluation ---------------------------------------------------------------

# returns (minimised objectives, feasible) or (minimised objectives, feasible, violation)
GeneEvaluator = Callable[[np.ndarray], tuple]


class ObjectiveEvaluator:
    """Maps a pulse to its :class:`ObjectivePoint`; failures become infeasible points."""

    def __init__(self, constants: PhysicsConstants = DEFAULT_CONSTANTS, scan_config: ScanConfig = ScanConfig()):
        self.constants = constants
        self.scan_config = scan_config

    def __call__(self, model: PulseModel) -> ObjectivePoint:
        return objectives(model, self.constants, self.scan_config)


@dataclass
class _Population:
    X: np.ndarray
    F: np.ndarray
    feasible: np.ndarray
    rank: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    crowd: np.ndarray = field(default_factory=lambda: np.empty(0))


class _CachedEvaluator:
    def __init__(self, fn: GeneEvaluator, threads: int):
        self.fn = fn
        self.threads = max(1, int(threads))
        self.cache: dict[tuple[float, ...], tuple[np.ndarray, bool, float]] = {}
        self.n_evaluations = 0
        self.failures: list[dict] = []

    def _one(self, x: np.ndarray) -> tuple[np.ndarray, bool, float, str | None]:
        try:
            out = self.fn(x)
            f, ok = np.asarray(out[0], dtype=float), bool(out[1])
            viol = 0.0 if ok or len(out) < 3 else float(out[2])
            if not (np.all(np.isfinite(f)) and math.isfinite(viol)):
                raise FloatingPointError("non-finite objective")
            return f, ok, viol, None
        except (IntegrationError, ArithmeticError, ValueError) as exc:
            return np.array(HV_REFERENCE, dtype=float), False, 1.0, str(exc)

    def __call__(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        keys = [genome_key(x) for x in X]
        pending: dict[tuple[float, ...], int] = {}
        for i, k in enumerate(keys):
            if k not in self.cache and k not in pending:
                pending[k] = i
        todo = list(pending.values())
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                results = list(pool.map(self._one, [X[i] for i in todo]))
        else:
            results = [self._one(X[i]) for i in todo]
        for i, (f, ok, viol, err) in zip(todo, results):  # gathered in index order
            self.cache[keys[i]] = (f, ok, viol)
            self.n_evaluations += 1
            if err is not None:
                self.failures.append({"genes": [float(v) for v in X[i]], "error": err})
                log.warning("evaluation failed, candidate marked infeasible: %s", err)
        F = np.array([self.cache[k][0] for k in keys]).reshape(len(keys), -1)
        feas = np.array([self.cache[k][1] for k in keys], dtype=bool)
        viol = np.array([self.cache[k][2] for k in keys], dtype=float)
        return F, feas, viol


def _rank_and_crowd(
    F: np.ndarray, feasible: np.ndarray, violation: np.ndarray
) -> tuple[np.ndarray, np.ndarray, list[list[int]]]:
    fronts = non_dominated_sort(F, feasible, violation)
    rank = np.empty(F.shape[0], dtype=int)
    crowd = np.empty(F.shape[0])
    for r, front in enumerate(fronts, start=1):
        rank[front] = r
        crowd[front] = crowding_distance(F[front])
    return rank, crowd, fronts


def _tournament(rank: np.ndarray, crowd: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.integers(0, rank.size, n)
    b = rng.integers(0, rank.size, n)
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] > crowd[b]))
    tie = (rank[a] == rank[b]) & (crowd[a] == crowd[b])
    coin = rng.random(n) < 0.5
    return np.where(a_wins | (tie & coin), a, b)


def _front_hv(F: np.ndarray, feasible: np.ndarray, rank: np.ndarray) -> float:
    mask = (rank == 1) & feasible
    return hypervolume_2d(F[mask]) if np.any(mask) else 0.0


@dataclass
class BoxResult:
    X: np.ndarray
    F: np.ndarray
    feasible: np.ndarray
    rank: np.ndarray
    crowd: np.ndarray
    generations_run: int
    stop_reason: str
    hv_log: list[dict]
    n_evaluations: int
    failures: list[dict]
    violation: np.ndarray | None = None


def optimize_box(
    lower: np.ndarray,
    upper: np.ndarray,
    evaluate: GeneEvaluator,
    config: GAConfig = GAConfig(),
    seed: int = 0,
    threads: int = 1,
    initial: np.ndarray | None = None,
    on_generation: Callable[[int, float, np.ndarray, np.ndarray], None] | None = None,
) -> BoxResult:
    """Generic NSGA-II on a box; ``evaluate`` returns (minimised objectives, feasible[, violation]).

    ``on_generation(gen, hypervolume, F, feasible)`` sees each surviving population.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(upper < lower):
        raise ValueError("box upper bounds must not lie below the lower bounds")
    n_genes = lower.size
    N = config.population
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / n_genes
    rng = np.random.default_rng(seed)
    evaluator = _CachedEvaluator(evaluate, threads)

    X = lower + rng.random((N, n_genes)) * (upper - lower)
    if initial is not None and len(initial):
        seeds = np.clip(np.asarray(initial, dtype=float)[:N], lower, upper)
        X[: len(seeds)] = seeds
    F, feas, viol = evaluator(X)
    rank, crowd, _ = _rank_and_crowd(F, feas, viol)
    hv = _front_hv(F, feas, rank)
    hv_log = [{"generation": 0, "hypervolume": hv, "front_size": int(np.sum((rank == 1) & feas)),
               "n_evaluations": evaluator.n_evaluations, "n_failures": len(evaluator.failures)}]
    if on_generation:
        on_generation(0, hv, F, feas)
    stop_reason = "budget"
    gen = 0
    for gen in range(1, config.generations + 1):
        parents = _tournament(rank, crowd, N, rng)
        children = np.empty((N, n_genes))
        for j in range(0, N, 2):
            p1, p2 = X[parents[j]], X[parents[j + 1]]
            if rng.random() < config.crossover_prob:
                c1, c2 = sbx_crossover(p1, p2, lower, upper, config.eta_crossover, rng)
            else:
                c1, c2 = p1.copy(), p2.copy()
            children[j] = polynomial_mutation(c1, lower, upper, config.eta_mutation, pm, rng)
            children[j + 1] = polynomial_mutation(c2, lower, upper, config.eta_mutation, pm, rng)
        Fc, feas_c, viol_c = evaluator(children)
        Xa = np.vstack([X, children])
        Fa = np.vstack([F, Fc])
        feas_a = np.concatenate([feas, feas_c])
        viol_a = np.concatenate([viol, viol_c])
        rank_a, crowd_a, fronts = _rank_and_crowd(Fa, feas_a, viol_a)
        keep: list[int] = []
        for front in fronts:
            if len(keep) + len(front) <= N:
                keep.extend(front)
            else:
                order = sorted(front, key=lambda i: -crowd_a[i])
                keep.extend(order[: N - len(keep)])
                break
        keep_arr = np.array(keep)
        X, F, feas, viol = Xa[keep_arr], Fa[keep_arr], feas_a[keep_arr], viol_a[keep_arr]
        rank, crowd, _ = _rank_and_crowd(F, feas, viol)
        hv = _front_hv(F, feas, rank)
        hv_log.append({"generation": gen, "hypervolume": hv, "front_size": int(np.sum((rank == 1) & feas)),
                       "n_evaluations": evaluator.n_evaluations, "n_failures": len(evaluator.failures)})
        log.info("generation %d: hypervolume %.6g, front size %d", gen, hv, hv_log[-1]["front_size"])
        if on_generation:
            on_generation(gen, hv, F, feas)
        w = config.stagnation_window
        if gen >= w and hv > 0:
            past = hv_log[-1 - w]["hypervolume"]
            if hv - past <= config.stagnation_rtol * max(abs(hv), 1e-300):
                stop_reason = f"hypervolume stagnation over {w} generations"
                break
    return BoxResult(
        X, F, feas, rank, crowd, gen, stop_reason, hv_log, evaluator.n_evaluations, evaluator.failures, viol
    )


def _archive_from_box(family: str, T: float, seed: int, config: GAConfig, res: BoxResult) -> ParetoArchive:
    entries = []
    for i in range(res.X.shape[0]):
        obj = ObjectivePoint(float(res.F[i, 0]), float(-res.F[i, 1]), bool(res.feasible[i]))
        if not obj.feasible:
            viol = float(res.violation[i]) if res.violation is not None else 0.0
            obj = ObjectivePoint(obj.max_pf, 0.0, False, viol)
        entries.append(ArchiveEntry(res.X[i].copy(), obj, int(res.rank[i]), float(res.crowd[i])))
    entries.sort(key=lambda e: (e.rank, e.objective.det_rob, e.objective.max_pf))
    return ParetoArchive(
        family, T, seed, entries, config, res.generations_run, res.stop_reason,
        res.hv_log, res.n_evaluations, res.failures,
    )


def model_gene_evaluator(family: str, T: float, evaluator: Callable[[PulseModel], ObjectivePoint]) -> GeneEvaluator:
    def evaluate(x: np.ndarray) -> tuple[np.ndarray, bool, float]:
        point = evaluator(model_from_vector(family, x, T))
        return np.array([point.max_pf, -point.det_rob]), point.feasible, point.violation

    return evaluate


def optimize(
    family: str,
    T: float,
    config: GAConfig | None = None,
    evaluator: Callable[[PulseModel], ObjectivePoint] | None = None,
    seed: int = 0,
    threads: int = 1,
    initial: np.ndarray | None = None,
) -> ParetoArchive:
    """NSGA-II Pareto search for one model family and duration."""
    config = config or GAConfig.for_duration(T)
    evaluator = evaluator or ObjectiveEvaluator()
    lower, upper = search_box(family)
    res = optimize_box(lower, upper, model_gene_evaluator(family, T, evaluator), config, seed, threads, initial)
    return _archive_from_box(family, T, seed, config, res)


def densify(
    archive: ParetoArchive,
    target: int = 175,
    evaluator: Callable[[PulseModel], ObjectivePoint] | None = None,
    generations: int = 20,
    threads: int = 1,
    max_rounds: int = 3,
) -> ParetoArchive:
    """Grow the rank-1 front towards ``target`` points by seeded, larger re-runs.

    Each round starts from the current front, uses a population of at least
    ``2 * target`` and a seed derived from the original. Fronts are merged and
    only the non-dominated union is kept, so the result can still hold fewer
    than ``target`` points when the re-runs keep improving on the old front.
    """
    current = archive
    for round_ in range(1, max_rounds + 1):
        if len(current.front) >= target:
            break
        pop = max(archive.config.population, 2 * target)
        pop += pop % 2
        cfg = GAConfig(**{**asdict(archive.config), "population": pop, "generations": generations})
        initial = np.array([e.genes for e in current.front]).reshape(-1, len(archive.gene_names))
        rerun = optimize(archive.family, archive.T, cfg, evaluator, archive.seed + 1_000_003 * round_, threads, initial)
        current = _merge_fronts(current, rerun, f"densified x{round_} ({archive.stop_reason})")
    return current


def _merge_fronts(a: ParetoArchive, b: ParetoArchive, reason: str) -> ParetoArchive:
    pool = a.front + b.front
    F = np.array([[e.objective.max_pf, -e.objective.det_rob] for e in pool]).reshape(-1, 2)
    rank, crowd, _ = _rank_and_crowd(F, np.ones(len(pool), dtype=bool), np.zeros(len(pool)))
    entries = [ArchiveEntry(e.genes, e.objective, int(r), float(c), e.amp_rob) for e, r, c in zip(pool, rank, crowd)]
    entries.sort(key=lambda e: (e.rank, e.objective.det_rob, e.objective.max_pf))
    return ParetoArchive(
        a.family, a.T, a.seed, entries, a.config, a.generations_run + b.generations_run, reason,
        a.hv_log + b.hv_log, a.n_evaluations + b.n_evaluations, a.failures + b.failures,
    )


def attach_amplitude_robustness(
    archive: ParetoArchive,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    config: AmplitudeScanConfig = AmplitudeScanConfig(),
) -> None:
    """Fill ``amp_rob`` for every front entry from an amplitude scan at delta = 0."""
    for e in archive.front:
        e.amp_rob = amplitude_robustness(model_from_vector(archive.family, e.genes, archive.T), constants, config)


# --- export -------------------------------------------------------------------


def front_rows(archive: ParetoArchive) -> list[dict]:
    names = archive.gene_names
    front = archive.front
    if not front:
        row = {f"gene_{n}": "" for n in names}
        row.update({"max_pf": "", "det_rob_GHz": "", "amp_rob_GHz": "", "rank": EMPTY_FRONT})
        return [row]
    rows = []
    for e in front:
        row = {f"gene_{n}": repr(float(g)) for n, g in zip(names, e.genes)}
        row.update(
            {
                "max_pf": repr(e.objective.max_pf),
                "det_rob_GHz": repr(e.objective.det_rob),
                "amp_rob_GHz": repr(float(e.amp_rob)),
                "rank": e.rank,
            }
        )
        rows.append(row)
    return rows


def front_export(archive: ParetoArchive, path: str | Path) -> None:
    rows = front_rows(archive)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def archive_manifest(archive: ParetoArchive, extra: dict | None = None) -> dict:
    return {
        "family": archive.family,
        "T_ns": archive.T,
        "seed": archive.seed,
        "ga_config": asdict(archive.config),
        "generations_run": archive.generations_run,
        "stop_reason": archive.stop_reason,
        "n_evaluations": archive.n_evaluations,
        "n_failures": len(archive.failures),
        "failures": archive.failures[:50],
        "front_size": len(archive.front),
        "gene_names": list(archive.gene_names),
        **(extra or {}),
    }


def save_run(archive: ParetoArchive, directory: str | Path, extra_manifest: dict | None = None) -> Path:
    """Write manifest, rank-1 archive CSV and the per-generation hypervolume log."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    front_export(archive, d / ARCHIVE_FILE)
    with open(d / HV_LOG_FILE, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["generation", "hypervolume", "front_size", "n_evaluations", "n_failures"])
        w.writeheader()
        w.writerows(archive.hv_log)
    (d / MANIFEST_FILE).write_text(json.dumps(archive_manifest(archive, extra_manifest), indent=2))
    return d


def load_run(directory: str | Path) -> ParetoArchive:
    """Rebuild the rank-1 archive written by :func:`save_run`."""
    d = Path(directory)
    manifest = json.loads((d / MANIFEST_FILE).read_text())
    names = manifest["gene_names"]
    entries = []
    with open(d / ARCHIVE_FILE, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["rank"] == EMPTY_FRONT:
                continue
            genes = np.array([float(row[f"gene_{n}"]) for n in names])
            obj = ObjectivePoint(float(row["max_pf"]), float(row["det_rob_GHz"]), True)
            entries.append(ArchiveEntry(genes, obj, int(row["rank"]), math.nan, float(row["amp_rob_GHz"])))
    cfg = GAConfig(**manifest["ga_config"])
    hv_log = []
    if (d / HV_LOG_FILE).exists():
        with open(d / HV_LOG_FILE, newline="") as fh:
            hv_log = [
                {"generation": int(r["generation"]), "hypervolume": float(r["hypervolume"]),
                 "front_size": int(r["front_size"]), "n_evaluations": int(r["n_evaluations"]),
                 "n_failures": int(r["n_failures"])}
                for r in csv.DictReader(fh)
            ]
    return ParetoArchive(
        manifest["family"], float(manifest["T_ns"]), int(manifest["seed"]), entries, cfg,
        int(manifest["generations_run"]), manifest["stop_reason"], hv_log,
        int(manifest["n_evaluations"]), manifest.get("failures", []),
    )
