"""The solver portfolio: epsilon-constrained DE, a constrained (1+1)-ES and a
multi-swarm PSO, each reporting the function evaluations it needed."""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from typing import Dict, Optional

import numpy as np

from . import _kernels
from .cop import COPInstance, ContractError

DEFAULT_PRECISION = 1e-4


class SolverKind(str, enum.Enum):
    DE = "DE"
    ES = "ES"
    PSO = "PSO"


SOLVER_ORDER = (SolverKind.DE, SolverKind.ES, SolverKind.PSO)


class SolverConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    kind: SolverKind
    population_size: int = 20
    de_scale: float = 0.5
    de_crossover: float = 0.9
    eps_level_initial: float = 1.0
    eps_level_decay_exponent: float = 5.0
    eps_level_cutoff: int = 300
    archive_size: int = 20
    gradient_repair_prob: float = 0.1
    fd_step: float = 1e-6
    es_initial_step: float = 0.3
    es_covariance_learning: float = 2.0 / 31.0
    pso_subswarm_count: int = 4
    pso_subswarm_size: int = 5
    pso_inertia: float = 0.7298
    pso_c1: float = 1.49618
    pso_c2: float = 1.49618
    pso_regroup_period: int = 5

    def __post_init__(self):
        object.__setattr__(self, "kind", SolverKind(self.kind))
        if self.population_size < 1:
            raise SolverConfigError("population_size must be positive")
        if self.kind is SolverKind.DE:
            if self.population_size < 4:
                raise SolverConfigError("DE/rand/1 needs at least 4 individuals")
            if not 0.0 < self.de_scale <= 2.0:
                raise SolverConfigError("de_scale must lie in (0, 2]")
            if not 0.0 <= self.de_crossover <= 1.0:
                raise SolverConfigError("de_crossover must lie in [0, 1]")
            if not 0.0 <= self.gradient_repair_prob <= 1.0:
                raise SolverConfigError("gradient_repair_prob must lie in [0, 1]")
            if self.eps_level_initial < 0 or self.archive_size < 0 or self.eps_level_cutoff < 1:
                raise SolverConfigError("invalid epsilon-level or archive settings")
        elif self.kind is SolverKind.ES:
            if self.population_size != 1:
                raise SolverConfigError("the (1+1)-ES has population_size 1")
            if self.es_initial_step <= 0 or not 0.0 < self.es_covariance_learning < 1.0:
                raise SolverConfigError("invalid ES step or covariance learning rate")
        else:
            if self.pso_subswarm_count * self.pso_subswarm_size != self.population_size:
                raise SolverConfigError("pso_subswarm_count * pso_subswarm_size must equal population_size")
            if self.pso_regroup_period < 1:
                raise SolverConfigError("pso_regroup_period must be positive")

    @classmethod
    def default(cls, kind, dimension: int = 5) -> "SolverConfig":
        """Defaults scaled to the problem dimension."""
        kind = SolverKind(kind)
        if kind is SolverKind.DE:
            return cls(kind, population_size=4 * dimension, archive_size=4 * dimension)
        if kind is SolverKind.ES:
            return cls(kind, population_size=1, es_covariance_learning=2.0 / (dimension ** 2 + 6))
        size = 5
        count = max(1, (4 * dimension) // size)
        return cls(kind, population_size=count * size, pso_subswarm_count=count, pso_subswarm_size=size)

    def encode(self) -> np.ndarray:
        """Fixed-order numeric vector; fields the kind does not use are zero."""
        used = _USED_FIELDS[self.kind]
        return np.array([float(getattr(self, name)) if name in used else 0.0 for name in ENCODED_FIELDS])


ENCODED_FIELDS = tuple(f.name for f in fields(SolverConfig) if f.name != "kind")
_USED_FIELDS = {
    SolverKind.DE: {"population_size", "de_scale", "de_crossover", "eps_level_initial",
                    "eps_level_decay_exponent", "eps_level_cutoff", "archive_size",
                    "gradient_repair_prob", "fd_step"},
    SolverKind.ES: {"population_size", "es_initial_step", "es_covariance_learning"},
    SolverKind.PSO: {"population_size", "pso_subswarm_count", "pso_subswarm_size", "pso_inertia",
                     "pso_c1", "pso_c2", "pso_regroup_period"},
}


def default_configs(dimension: int = 5) -> Dict[SolverKind, SolverConfig]:
    return {k: SolverConfig.default(k, dimension) for k in SOLVER_ORDER}


def encode_configs(configs: Dict[SolverKind, SolverConfig]) -> np.ndarray:
    return np.concatenate([configs[k].encode() for k in SOLVER_ORDER])


@dataclass(frozen=True)
class RunResult:
    solved: bool
    fen: int
    best_f: float
    best_phi: float
    seed: int
    evaluations: int = 0


@dataclass(frozen=True)
class SolverStats:
    mean_fen: float
    success_fraction: float
    repeats: int


@dataclass(frozen=True)
class PerformanceRecord:
    instance_id: str
    per_solver: dict
    budget: int = 0
    seed: int = 0

    def mean_fens(self) -> np.ndarray:
        return np.array([self.per_solver[k].mean_fen for k in SOLVER_ORDER])

    def best(self) -> SolverKind:
        return SOLVER_ORDER[int(np.argmin(self.mean_fens()))]


def _seed32(seed: int) -> int:
    return int(seed) % (2 ** 32)


def _check(instance: COPInstance, config: SolverConfig, kind: SolverKind, budget: int):
    if config.kind is not kind:
        raise SolverConfigError(f"expected a {kind.value} config, got {config.kind.value}")
    if budget < config.population_size or budget < 1:
        raise SolverConfigError(f"budget {budget} is smaller than the population size {config.population_size}")


def _kernel(name: str, backend: str):
    if backend == "numba":
        return getattr(_kernels, name)
    if backend == "python":
        run = getattr(_kernels, name + "_py")

        def quiet(*args):
            # compiled kernels overflow silently; keep the twin's IEEE results without the warnings
            with np.errstate(all="ignore"):
                return run(*args)

        return quiet
    raise ValueError(f"unknown backend {backend!r}")


def solve_de(instance: COPInstance, config: SolverConfig, budget: int,
             target_precision: float = DEFAULT_PRECISION, seed: int = 0, backend: str = "numba") -> RunResult:
    _check(instance, config, SolverKind.DE, budget)
    run = _kernel("de_run", backend)
    solved, fen, bf, bp, used = run(
        *instance.packed, float(target_precision), int(budget), _seed32(seed),
        config.population_size, config.de_scale, config.de_crossover, config.eps_level_initial,
        config.eps_level_decay_exponent, float(config.eps_level_cutoff), config.archive_size,
        config.gradient_repair_prob, config.fd_step)
    return RunResult(bool(solved), int(fen), float(bf), float(bp), seed, int(used))


def run_es(instance: COPInstance, config: SolverConfig, budget: int,
           target_precision: float = DEFAULT_PRECISION, seed: int = 0, backend: str = "numba"):
    """Like :func:`solve_es` but also returns the filtered constraint vectors."""
    _check(instance, config, SolverKind.ES, budget)
    normals = np.zeros((len(instance.constraints), instance.dimension))
    run = _kernel("es_run", backend)
    solved, fen, bf, bp, used = run(
        *instance.packed, float(target_precision), int(budget), _seed32(seed),
        config.es_initial_step, config.es_covariance_learning, normals)
    return RunResult(bool(solved), int(fen), float(bf), float(bp), seed, int(used)), normals


def solve_es(instance: COPInstance, config: SolverConfig, budget: int,
             target_precision: float = DEFAULT_PRECISION, seed: int = 0, backend: str = "numba") -> RunResult:
    return run_es(instance, config, budget, target_precision, seed, backend)[0]


def solve_pso(instance: COPInstance, config: SolverConfig, budget: int,
              target_precision: float = DEFAULT_PRECISION, seed: int = 0, backend: str = "numba",
              init_at: Optional[np.ndarray] = None) -> RunResult:
    _check(instance, config, SolverKind.PSO, budget)
    start = np.empty(0) if init_at is None else np.asarray(init_at, dtype=float)
    if start.size and start.shape != (instance.dimension,):
        raise ContractError("init_at must be a vector of length D")
    run = _kernel("pso_run", backend)
    solved, fen, bf, bp, used = run(
        *instance.packed, float(target_precision), int(budget), _seed32(seed),
        config.pso_subswarm_count, config.pso_subswarm_size, config.pso_inertia,
        config.pso_c1, config.pso_c2, config.pso_regroup_period, start)
    return RunResult(bool(solved), int(fen), float(bf), float(bp), seed, int(used))


SOLVE = {SolverKind.DE: solve_de, SolverKind.ES: solve_es, SolverKind.PSO: solve_pso}


def solve(instance: COPInstance, config: SolverConfig, budget: int,
          target_precision: float = DEFAULT_PRECISION, seed: int = 0, backend: str = "numba") -> RunResult:
    return SOLVE[config.kind](instance, config, budget, target_precision, seed, backend)


def measure(instance: COPInstance, solver_kind, config: SolverConfig, budget: int,
            target_precision: float = DEFAULT_PRECISION, repeats: int = 30, seed: int = 0) -> SolverStats:
    """Mean FEN and success fraction over ``repeats`` seeded runs.

    Run ``r`` uses seed ``seed + r``; unsolved runs count at ``budget``.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    kind = SolverKind(solver_kind)
    if config.kind is not kind:
        raise SolverConfigError("solver_kind and config.kind disagree")
    runs = [SOLVE[kind](instance, config, budget, target_precision, seed + r) for r in range(repeats)]
    fens = [r.fen for r in runs]
    return SolverStats(float(np.mean(fens)), sum(r.solved for r in runs) / repeats, repeats)


def measure_all(instance: COPInstance, configs: Dict[SolverKind, SolverConfig], budget: int,
                target_precision: float = DEFAULT_PRECISION, repeats: int = 30, seed: int = 0) -> PerformanceRecord:
    per = {k: measure(instance, k, configs[k], budget, target_precision, repeats, seed) for k in SOLVER_ORDER}
    return PerformanceRecord(instance.id, per, budget, seed)


# -- batch file ------------------------------------------------------------------------

PERFORMANCE_COLUMNS = ("instance_id", "solver", "repeats", "mean_fen", "success_fraction", "budget", "seed")


def write_performance(records, path) -> None:
    import csv

    rows = sorted(((r, k) for r in records for k in SOLVER_ORDER), key=lambda rk: (rk[0].instance_id, rk[1].value))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PERFORMANCE_COLUMNS)
        for rec, k in rows:
            s = rec.per_solver[k]
            w.writerow([rec.instance_id, k.value, s.repeats, repr(s.mean_fen), repr(s.success_fraction),
                        rec.budget, rec.seed])


def read_performance(path) -> list:
    import csv

    grouped: dict = {}
    meta: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k = SolverKind(row["solver"])
            grouped.setdefault(row["instance_id"], {})[k] = SolverStats(
                float(row["mean_fen"]), float(row["success_fraction"]), int(row["repeats"]))
            meta[row["instance_id"]] = (int(row["budget"]), int(row["seed"]))
    return [PerformanceRecord(i, per, *meta[i]) for i, per in grouped.items()]


__all__ = [
    "SolverKind", "SolverConfig", "SolverConfigError", "RunResult", "SolverStats", "PerformanceRecord",
    "solve_de", "solve_es", "solve_pso", "run_es", "solve", "measure", "measure_all",
    "default_configs", "encode_configs", "write_performance", "read_performance",
]
