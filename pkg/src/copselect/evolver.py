"""Multi-objective DE (DEMO-style) over constraint coefficients.

Each run breeds instances that are hard (or easy) for one target solver while
staying easy (or hard) for the other two. Objectives, both minimised
internally:

* hard: ``(-fen(target), mean fen(others))``
* easy: ``(fen(target), -mean fen(others))``
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .cop import COPInstance, ConstraintKind, GeneratorSpec, SearchSpace, constraint_from_slack, deserialize, serialize
from .seeds import derive_seed
from .solvers import (DEFAULT_PRECISION, SOLVER_ORDER, SolverConfig, SolverKind, default_configs, measure_all)

log = logging.getLogger(__name__)


class SubsetTag(str, enum.Enum):
    EXTREME = "ExtremePoint"
    FRONT = "ParetoFront"
    RANDOM = "RandomPool"


class SubsetKind(str, enum.Enum):
    EP = "EP"
    PF = "PF"
    RO = "RO"
    PFR = "PFR"


class SelectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvolvedInstance:
    instance: COPInstance
    scores: dict
    target: SolverKind
    pareto_rank: int = 1
    subset_tags: frozenset = frozenset()
    sense: str = "hard"
    repeats: int = 1
    genome: tuple = ()

    @property
    def hardness_gap(self) -> float:
        others = [self.scores[k] for k in SOLVER_ORDER if k is not self.target]
        return self.scores[self.target] / max(float(np.mean(others)), 1e-12)


@dataclass(frozen=True)
class EvolverConfig:
    target: SolverKind = SolverKind.DE
    sense: str = "hard"
    population_size: int = 40
    generations: int = 25
    scale: float = 0.5
    crossover: float = 0.3
    evolve_kinds: bool = True
    lin_bounds: tuple = (-5.0, 5.0)
    quad_bounds: tuple = (-5.0, 5.0)
    slack_bounds: tuple = (-1.0, 0.0)
    inner_budget: int = 30_000
    inner_repeats: int = 3
    final_repeats: int = 0
    precision: float = DEFAULT_PRECISION

    def __post_init__(self):
        object.__setattr__(self, "target", SolverKind(self.target))
        if self.sense not in ("hard", "easy"):
            raise ValueError("sense must be 'hard' or 'easy'")
        if self.population_size < 4 or self.generations < 0 or self.inner_repeats < 1:
            raise ValueError("invalid evolver sizes")
        for lo, hi in (self.lin_bounds, self.quad_bounds, self.slack_bounds):
            if not lo < hi:
                raise ValueError("genome bounds must be increasing")
        if self.slack_bounds[1] > 0.0:
            raise ValueError("slack upper bound must be <= 0 to keep the optimum feasible")


# -- objectives and sorting ----------------------------------------------------

def objective_vector(scores: dict, target, sense: str = "hard") -> np.ndarray:
    target = SolverKind(target)
    t = scores[target]
    others = float(np.mean([scores[k] for k in SOLVER_ORDER if k is not target]))
    if sense == "hard":
        return np.array([-t, others])
    return np.array([t, -others])


def dominates(a: dict, b: dict, target, sense: str = "hard") -> bool:
    """Pareto dominance on the bi-objective (target FEN, mean FEN of others)."""
    va, vb = objective_vector(a, target, sense), objective_vector(b, target, sense)
    return bool(np.all(va <= vb) and np.any(va < vb))


def non_dominated_sort(objs: np.ndarray) -> List[List[int]]:
    n = objs.shape[0]
    dominated_by = [[] for _ in range(n)]
    counts = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(n):
            if i != j and np.all(objs[i] <= objs[j]) and np.any(objs[i] < objs[j]):
                dominated_by[i].append(j)
            elif i != j and np.all(objs[j] <= objs[i]) and np.any(objs[j] < objs[i]):
                counts[i] += 1
    fronts = [[i for i in range(n) if counts[i] == 0]]
    while fronts[-1]:
        nxt = []
        for i in fronts[-1]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        fronts.append(sorted(nxt))
    return fronts[:-1]


def crowding_distance(objs: np.ndarray) -> np.ndarray:
    n, k = objs.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for m in range(k):
        order = np.argsort(objs[:, m], kind="stable")
        dist[order[0]] = dist[order[-1]] = np.inf
        span = objs[order[-1], m] - objs[order[0], m]
        if span <= 0:
            continue
        for r in range(1, n - 1):
            dist[order[r]] += (objs[order[r + 1], m] - objs[order[r - 1], m]) / span
    return dist


def truncate(objs: np.ndarray, size: int) -> List[int]:
    """Indices kept by non-dominated sorting with crowding-distance tie-breaks."""
    keep: List[int] = []
    for front in non_dominated_sort(objs):
        if len(keep) + len(front) <= size:
            keep.extend(front)
            continue
        cd = crowding_distance(objs[front])
        order = sorted(range(len(front)), key=lambda r: (-cd[r], front[r]))
        keep.extend(front[r] for r in order[: size - len(keep)])
        break
    return keep


def pareto_ranks(objs: np.ndarray) -> np.ndarray:
    ranks = np.zeros(objs.shape[0], dtype=int)
    for r, front in enumerate(non_dominated_sort(objs), 1):
        ranks[front] = r
    return ranks


# -- genome ----------------------------------------------------------------------

class Genome:
    """Maps a flat real vector to a constraint set over a fixed base spec.

    Per slot: an optional kind gene (>= 0.5 means quadratic), D linear
    coefficients, D quadratic coefficients and the slack ``g(x*)``.
    """

    def __init__(self, base: GeneratorSpec, config: EvolverConfig):
        self.base = base
        self.config = config
        self.d = base.dimension
        self.kinds = ([ConstraintKind.LINEAR] * base.n_linear + [ConstraintKind.QUADRATIC] * base.n_quadratic)
        if base.n_equality:
            raise ValueError("the evolver works on inequality constraints only")
        self.slot = (1 if config.evolve_kinds else 0) + 2 * self.d + 1
        lo, hi = [], []
        for _ in self.kinds:
            if config.evolve_kinds:
                lo.append(0.0)
                hi.append(1.0)
            lo += [config.lin_bounds[0]] * self.d + [config.quad_bounds[0]] * self.d + [config.slack_bounds[0]]
            hi += [config.lin_bounds[1]] * self.d + [config.quad_bounds[1]] * self.d + [config.slack_bounds[1]]
        self.lower = np.array(lo)
        self.upper = np.array(hi)

    @property
    def length(self) -> int:
        return self.lower.shape[0]

    def random(self, rng: np.random.Generator) -> np.ndarray:
        g = rng.uniform(self.lower, self.upper)
        if self.config.evolve_kinds:
            for s, kind in enumerate(self.kinds):
                # start from the base spec's kind mix, evolution may flip it
                g[s * self.slot] = 0.75 if kind is ConstraintKind.QUADRATIC else 0.25
        return g

    def decode(self, genome: np.ndarray, id: str) -> COPInstance:
        genome = np.clip(genome, self.lower, self.upper)
        opt = self.base.objective.optimum(self.d)
        cons = []
        for s, kind in enumerate(self.kinds):
            p = s * self.slot
            if self.config.evolve_kinds:
                kind = ConstraintKind.QUADRATIC if genome[p] >= 0.5 else ConstraintKind.LINEAR
                p += 1
            lin = genome[p:p + self.d].copy()
            quad = genome[p + self.d:p + 2 * self.d].copy()
            slack = float(genome[p + 2 * self.d])
            if kind is ConstraintKind.LINEAR:
                quad[:] = 0.0
                if not np.any(lin):
                    lin[0] = 1e-9
            elif not np.any(quad):
                quad[0] = 1e-9
            cons.append(constraint_from_slack(kind, quad, lin, slack, opt))
        space = SearchSpace.cube(self.d, self.base.lower, self.base.upper)
        return COPInstance(id, self.base.objective, cons, space, self.base.epsilon)

    def vary(self, rng, target: np.ndarray, r1: np.ndarray, r2: np.ndarray, r3: np.ndarray) -> np.ndarray:
        """DE/rand/1/bin; out-of-range genes bounce to the midpoint with the target."""
        f, cr = self.config.scale, self.config.crossover
        mutant = r1 + f * (r2 - r3)
        mask = rng.random(self.length) < cr
        mask[rng.integers(self.length)] = True
        trial = np.where(mask, mutant, target)
        low = trial < self.lower
        high = trial > self.upper
        trial[low] = 0.5 * (self.lower[low] + target[low])
        trial[high] = 0.5 * (self.upper[high] + target[high])
        return trial


# -- evolution ---------------------------------------------------------------------

@dataclass
class EvolverResult:
    population: List[EvolvedInstance]
    archive: List[EvolvedInstance]
    config: EvolverConfig
    base: GeneratorSpec
    history: List[float] = field(default_factory=list)
    discarded: int = 0

    def front(self) -> List[EvolvedInstance]:
        return [e for e in self.population if e.pareto_rank == 1]


def _score(instance, configs, cfg: EvolverConfig, repeats: int, seed: int) -> dict:
    rec = measure_all(instance, configs, cfg.inner_budget, cfg.precision, repeats, seed)
    return {k: rec.per_solver[k].mean_fen for k in SOLVER_ORDER}


def _ranked(members: List[EvolvedInstance], cfg: EvolverConfig, evolved: bool) -> List[EvolvedInstance]:
    if not members:
        return []
    objs = np.vstack([objective_vector(e.scores, cfg.target, cfg.sense) for e in members])
    ranks = pareto_ranks(objs)
    front = [i for i in range(len(members)) if ranks[i] == 1]
    ends = set()
    if front:
        ends.add(min(front, key=lambda i: (objs[i, 0], objs[i, 1], i)))
        ends.add(min(front, key=lambda i: (objs[i, 1], objs[i, 0], i)))
    out = []
    for i, e in enumerate(members):
        tags = {SubsetTag.RANDOM}
        if evolved and ranks[i] == 1:
            tags.add(SubsetTag.FRONT)
            if i in ends:
                tags.add(SubsetTag.EXTREME)
        out.append(replace(e, pareto_rank=int(ranks[i]), subset_tags=frozenset(tags)))
    return out


def evolve(config: EvolverConfig, base: GeneratorSpec, seed: int,
           solver_configs: Optional[Dict[SolverKind, SolverConfig]] = None,
           id_prefix: Optional[str] = None) -> EvolverResult:
    configs = solver_configs or default_configs(base.dimension)
    genome = Genome(base, config)
    rng = np.random.default_rng(derive_seed(seed, "variation"))
    score_seed = derive_seed(seed, "score") % (2 ** 31)
    prefix = id_prefix or f"{base.objective.value}-{config.target.value}-{config.sense}"

    discarded = 0

    def make(g: np.ndarray, name: str) -> Optional[EvolvedInstance]:
        nonlocal discarded
        inst = genome.decode(g, f"{prefix}-{name}")
        try:
            scores = _score(inst, configs, config, config.inner_repeats, score_seed)
        except Exception as exc:  # a failed candidate must not end the run
            warnings.warn(f"discarding candidate {inst.id}: {exc}")
            log.warning("discarding candidate %s: %s", inst.id, exc)
            discarded += 1
            return None
        return EvolvedInstance(inst, scores, config.target, sense=config.sense,
                               repeats=config.inner_repeats, genome=tuple(g.tolist()))

    pop: List[EvolvedInstance] = []
    for i in range(config.population_size):
        e = make(genome.random(rng), f"g0-i{i}")
        if e is not None:
            pop.append(e)
    archive = list(pop)
    history = []

    def extreme(members):
        return max(-objective_vector(e.scores, config.target, config.sense)[0] for e in members)

    if pop:
        history.append(extreme(pop))
    for gen in range(1, config.generations + 1):
        n = len(pop)
        if n < 4:
            break
        for i in range(n):
            others = [j for j in range(n) if j != i]
            r1, r2, r3 = rng.choice(others, 3, replace=False)
            g = genome.vary(rng, np.array(pop[i].genome), np.array(pop[r1].genome),
                            np.array(pop[r2].genome), np.array(pop[r3].genome))
            trial = make(g, f"g{gen}-i{i}")
            if trial is None:
                continue
            archive.append(trial)
            if dominates(trial.scores, pop[i].scores, config.target, config.sense):
                pop[i] = trial
            elif not dominates(pop[i].scores, trial.scores, config.target, config.sense):
                pop.append(trial)
        if len(pop) > config.population_size:
            objs = np.vstack([objective_vector(e.scores, config.target, config.sense) for e in pop])
            pop = [pop[i] for i in sorted(truncate(objs, config.population_size))]
        history.append(extreme(pop))

    if config.final_repeats > config.inner_repeats:
        pop = [replace(e, scores=_score(e.instance, configs, config, config.final_repeats, score_seed),
                       repeats=config.final_repeats) for e in pop]
    evolved = config.generations > 0
    return EvolverResult(_ranked(pop, config, evolved), _ranked(archive, config, False), config, base,
                         history, discarded)


# -- training subsets -------------------------------------------------------------

def _sample(rng, items: list, n: int, kind: SubsetKind) -> list:
    if n >= len(items):
        if n > len(items):
            warnings.warn(f"{kind.value}: requested {n} instances but only {len(items)} are available")
        return list(items)
    idx = sorted(rng.choice(len(items), n, replace=False))
    return [items[i] for i in idx]


def _tagged(items, tag: SubsetTag) -> list:
    return [replace(e, subset_tags=frozenset({tag})) for e in items]


def select_subset(populations: Sequence[EvolverResult], kind, n: int, seed: int) -> List[EvolvedInstance]:
    kind = SubsetKind(kind)
    rng = np.random.default_rng(derive_seed(seed, ("subset", kind.value)))
    front = [e for p in populations for e in p.front()]
    pool = [e for p in populations for e in p.archive]

    if kind is SubsetKind.EP:
        ends = []
        for p in populations:
            f = p.front()
            if not f:
                continue
            objs = np.vstack([objective_vector(e.scores, e.target, e.sense) for e in f])
            a = min(range(len(f)), key=lambda i: (objs[i, 0], objs[i, 1], i))
            b = min(range(len(f)), key=lambda i: (objs[i, 1], objs[i, 0], i))
            ends.extend([f[a]] if a == b else [f[a], f[b]])
        if not ends:
            raise SelectionError("EP: no Pareto fronts to take endpoints from")
        return _tagged(_sample(rng, ends, n, kind), SubsetTag.EXTREME)
    if kind is SubsetKind.PF:
        if not front:
            raise SelectionError("PF: no rank-1 members available")
        return _tagged(_sample(rng, front, n, kind), SubsetTag.FRONT)
    if kind is SubsetKind.RO:
        if not pool:
            raise SelectionError("RO: evaluation archives are empty")
        return _tagged(_sample(rng, pool, n, kind), SubsetTag.RANDOM)

    if not front or not pool:
        raise SelectionError("PFR: needs both a Pareto front and an archive")
    half = n // 2
    picked = _tagged(_sample(rng, front, half, kind), SubsetTag.FRONT)
    taken = {e.instance.id for e in picked}
    rest = [e for e in pool if e.instance.id not in taken]
    return picked + _tagged(_sample(rng, rest, n - len(picked), kind), SubsetTag.RANDOM)


# -- population dump ---------------------------------------------------------------

MANIFEST_COLUMNS = ("id", "origin", "target", "sense", "score_DE", "score_ES", "score_PSO",
                    "repeats", "pareto_rank", "subset_tags")


def dump_population(result: EvolverResult, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        seen = set()
        for origin, members in (("population", result.population), ("archive", result.archive)):
            for e in members:
                w.writerow([e.instance.id, origin, e.target.value, e.sense]
                           + [repr(e.scores[k]) for k in SOLVER_ORDER]
                           + [e.repeats, e.pareto_rank, "|".join(sorted(t.value for t in e.subset_tags))])
                if e.instance.id not in seen:
                    seen.add(e.instance.id)
                    with open(os.path.join(directory, f"{e.instance.id}.json"), "w") as doc:
                        doc.write(serialize(e.instance))
    with open(os.path.join(directory, "run.json"), "w") as fh:
        json.dump({"config": _config_dict(result.config), "base": _spec_dict(result.base),
                   "history": result.history, "discarded": result.discarded}, fh, indent=2)


def load_population(directory) -> EvolverResult:
    with open(os.path.join(directory, "run.json")) as fh:
        meta = json.load(fh)
    config = EvolverConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in meta["config"].items()})
    base = GeneratorSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in meta["base"].items()})
    population, archive = [], []
    with open(os.path.join(directory, "manifest.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            with open(os.path.join(directory, f"{row['id']}.json")) as doc:
                inst = deserialize(doc.read())
            scores = {k: float(row[f"score_{k.value}"]) for k in SOLVER_ORDER}
            tags = frozenset(SubsetTag(t) for t in row["subset_tags"].split("|") if t)
            e = EvolvedInstance(inst, scores, SolverKind(row["target"]), int(row["pareto_rank"]), tags,
                                row["sense"], int(row["repeats"]))
            (population if row["origin"] == "population" else archive).append(e)
    return EvolverResult(population, archive, config, base, meta["history"], meta["discarded"])


def _config_dict(cfg: EvolverConfig) -> dict:
    from dataclasses import asdict

    d = asdict(cfg)
    d["target"] = cfg.target.value
    return d


def _spec_dict(spec: GeneratorSpec) -> dict:
    from dataclasses import asdict

    d = asdict(spec)
    d["objective"] = spec.objective.value
    return d
