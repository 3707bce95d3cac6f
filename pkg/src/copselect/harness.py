"""Experiment harness: subset-study tables, the PFR-vs-RO benchmark, Welch
t-tests and report rendering, plus the end-to-end pipeline that ties them
together."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .config import ExperimentConfig, echo_config, parse_label
from .cop import COPInstance, GeneratorSpec, Objective, random_instance
from .evolver import (EvolvedInstance, EvolverConfig, EvolverResult, SubsetKind, SubsetTag, evolve,
                      objective_vector, select_subset)
from .features import FeatureVector, extract_features
from .model import LMConfig, PredictionModel, PredictionResult, fit_model, predict_features, save_model
from .seeds import derive_seed
from .solvers import SOLVER_ORDER, SolverKind, default_configs, measure_all

log = logging.getLogger(__name__)

TIE_TOLERANCE = 0.02


# -- statistics ----------------------------------------------------------------

@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p_value: float
    degenerate: bool = False


def welch(sample_a, sample_b) -> WelchResult:
    """Two-tail Welch t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 points")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0.0:
        return WelchResult(0.0, float(a.size + b.size - 2), 1.0, True)
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return WelchResult(float(t), float(df), float(min(1.0, max(0.0, p))))


def t_test_two_tail(sample_a, sample_b) -> float:
    return welch(sample_a, sample_b).p_value


# -- shared helpers ------------------------------------------------------------

def is_success(predicted: SolverKind, actual_fen: Dict[SolverKind, float], tolerance: float = TIE_TOLERANCE) -> bool:
    """The prediction counts as correct when its solver is within ``tolerance`` of the measured best."""
    best = min(actual_fen.values())
    return actual_fen[predicted] <= best * (1.0 + tolerance)


def measured_best(actual_fen: Dict[SolverKind, float]) -> SolverKind:
    return min(SOLVER_ORDER, key=lambda k: (actual_fen[k], SOLVER_ORDER.index(k)))


def fmt_k(value: float) -> str:
    return f"{value / 1000.0:.1f}K"


def _seed31(master: int, path) -> int:
    return derive_seed(master, path) % (2 ** 31)


class Pipeline:
    """Stateful helper that caches features and keeps the seed tree in one place."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.configs = default_configs(cfg.dimension)
        self.feature_seed = derive_seed(cfg.seed, "features") % (2 ** 32)
        self._features: Dict[str, FeatureVector] = {}

    # specs
    def bench_spec(self, objective: str, n_lin: int, n_quad: int) -> GeneratorSpec:
        b = self.cfg.coeff_bound
        return GeneratorSpec(Objective(objective), self.cfg.dimension, n_lin, n_quad, lin_range=(-b, b),
                             quad_range=(-b, b), slack_range=(self.cfg.slack_lower, 0.0))

    def evolver_config(self, target: SolverKind, sense: str) -> EvolverConfig:
        c, b = self.cfg, self.cfg.coeff_bound
        return EvolverConfig(target=target, sense=sense, population_size=c.population_size,
                             generations=c.generations, scale=c.scale, crossover=c.crossover,
                             lin_bounds=(-b, b), quad_bounds=(-b, b), slack_bounds=(c.slack_lower, 0.0),
                             inner_budget=c.budget, inner_repeats=c.inner_repeats, final_repeats=c.repeats,
                             precision=c.precision)

    # stages
    def evolve_all(self, objective: str) -> List[EvolverResult]:
        """Six runs: each solver as target, hard and easy."""
        n_lin = self.cfg.slots // 2
        base = self.bench_spec(objective, n_lin, self.cfg.slots - n_lin)
        out = []
        for target in SOLVER_ORDER:
            for sense in ("hard", "easy"):
                log.info("evolving %s %s-%s", objective, target.value, sense)
                out.append(evolve(self.evolver_config(target, sense), base,
                                  derive_seed(self.cfg.seed, ("evolve", objective, target.value, sense)),
                                  self.configs))
        return out

    def fresh_pool(self, objective: str, n: int) -> List[EvolvedInstance]:
        """``n`` freshly generated instances measured at full repeats, for ``ro_source = fresh``.

        ``target`` is a placeholder on these members; only instances and scores feed training.
        """
        n_lin = self.cfg.slots // 2
        spec = self.bench_spec(objective, n_lin, self.cfg.slots - n_lin)
        out = []
        for i in range(n):
            inst = random_instance(spec, _seed31(self.cfg.seed, ("fresh", objective, i)),
                                   id=f"{objective}-fresh-{i + 1}")
            out.append(EvolvedInstance(inst, self.measure(inst, ("fresh", objective, i)), SolverKind.DE,
                                       subset_tags=frozenset({SubsetTag.RANDOM}), repeats=self.cfg.repeats))
        return out

    def features(self, instance: COPInstance) -> FeatureVector:
        fv = self._features.get(instance.id)
        if fv is None:
            fv = extract_features(instance, self.cfg.n_samples, self.cfg.vicinity_radius_fraction,
                                  self.feature_seed)
            self._features[instance.id] = fv
        return fv

    def measure(self, instance: COPInstance, path) -> Dict[SolverKind, float]:
        rec = measure_all(instance, self.configs, self.cfg.budget, self.cfg.precision, self.cfg.repeats,
                          _seed31(self.cfg.seed, ("measure",) + tuple(path)))
        return {k: rec.per_solver[k].mean_fen for k in SOLVER_ORDER}

    def train(self, members: Sequence[EvolvedInstance], kind: str, objective: str) -> PredictionModel:
        c = self.cfg
        lm = LMConfig(lambda0=c.lambda0, lambda_up=c.lambda_up, lambda_down=c.lambda_down,
                      max_epochs=c.max_epochs, validation_fraction=c.validation_fraction, patience=c.patience,
                      seed=derive_seed(c.seed, ("train", objective, kind)) % (2 ** 32))
        feats = [self.features(e.instance) for e in members]
        fens = [[e.scores[k] for k in SOLVER_ORDER] for e in members]
        meta = {"subset": kind, "objective": objective, "n_train": len(members), "n_samples": c.n_samples,
                "vicinity_radius_fraction": c.vicinity_radius_fraction, "feature_seed": self.feature_seed}
        return fit_model(feats, fens, self.configs, c.budget, lm, meta)

    def predict(self, model: PredictionModel, instance: COPInstance) -> PredictionResult:
        return predict_features(model, self.features(instance), self.configs)


def _without(populations: Sequence[EvolverResult], excluded: set) -> List[EvolverResult]:
    out = []
    for p in populations:
        keep = [e for e in p.population if e.instance.id not in excluded]
        arch = [e for e in p.archive if e.instance.id not in excluded]
        out.append(EvolverResult(keep, arch, p.config, p.base, p.history, p.discarded))
    return out


def held_out_extremes(populations: Sequence[EvolverResult]) -> List[EvolvedInstance]:
    """Per run, the front member best on objective one (hardest, or easiest, for the target)."""
    out = []
    for p in populations:
        front = p.front()
        if front:
            out.append(min(front, key=lambda e: (objective_vector(e.scores, e.target, e.sense)[0], e.instance.id)))
    return out


def train_models(pipe: Pipeline, populations: Sequence[EvolverResult], kinds: Sequence[str], objective: str,
                 excluded: set = frozenset()) -> Dict[str, PredictionModel]:
    pool = _without(populations, set(excluded))
    models = {}
    for kind in kinds:
        if kind == "RO" and pipe.cfg.ro_source == "fresh":
            members = pipe.fresh_pool(objective, pipe.cfg.train_size)
        else:
            members = select_subset(pool, kind, pipe.cfg.train_size,
                                    derive_seed(pipe.cfg.seed, ("subset", objective)))
        models[kind] = pipe.train(members, kind, objective)
    return models


# -- subset study (per-instance tables) -----------------------------------------

@dataclass(frozen=True)
class StudyRow:
    model: str
    test: str
    predicted: SolverKind
    actual: SolverKind
    predicted_fen: Dict[SolverKind, float]
    actual_fen: Dict[SolverKind, float]

    @property
    def error(self) -> str:
        return "NO" if self.predicted is self.actual else "YES"

    def fen_error(self, kind: SolverKind) -> float:
        return self.predicted_fen[kind] - self.actual_fen[kind]


def _measured(pipe: Pipeline, label: str, instance: COPInstance, skipped: list):
    try:
        actual = pipe.measure(instance, ("study", instance.id))
    except (ArithmeticError, ValueError) as exc:
        warnings.warn(f"no ground truth for test {label!r}: {exc}")
        skipped.append(label)
        return None
    if not all(math.isfinite(v) for v in actual.values()):
        warnings.warn(f"no ground truth for test {label!r}: non-finite FEN")
        skipped.append(label)
        return None
    return label, instance, actual


def study_tests(pipe: Pipeline, populations: Sequence[EvolverResult], objective: str,
                skipped: Optional[list] = None) -> List[tuple]:
    """(label, instance, measured FEN) for the held-out extremes and fresh random instances.

    Tests whose measurement fails are left out and their labels appended to ``skipped``.
    """
    skipped = [] if skipped is None else skipped
    candidates = []
    for e in held_out_extremes(populations):
        candidates.append((f"{e.target.value} {e.sense} ({len(e.instance.constraints)} c)", e.instance))
    n_lin = pipe.cfg.slots // 2
    spec = pipe.bench_spec(objective, n_lin, pipe.cfg.slots - n_lin)
    for i in range(pipe.cfg.test_random):
        inst = random_instance(spec, _seed31(pipe.cfg.seed, ("study-random", objective, i)),
                               id=f"{objective}-random-{i + 1}")
        candidates.append((f"Random {i + 1}", inst))
    tests = [_measured(pipe, label, inst, skipped) for label, inst in candidates]
    return [t for t in tests if t is not None]


@dataclass
class StudyTable:
    rows: List[StudyRow]
    skipped: int = 0


def run_subset_study(pipe: Pipeline, populations: Sequence[EvolverResult], objective: str,
                     models: Optional[Dict[str, PredictionModel]] = None) -> StudyTable:
    """Train one model per subset kind and tabulate predicted vs. actual per test instance."""
    held = {e.instance.id for e in held_out_extremes(populations)}
    if models is None:
        models = train_models(pipe, populations, pipe.cfg.subset_kinds, objective, held)
    skipped: list = []
    tests = study_tests(pipe, populations, objective, skipped)
    rows = []
    for kind in pipe.cfg.subset_kinds:
        for label, inst, actual in tests:
            pred = pipe.predict(models[kind], inst)
            rows.append(StudyRow(f"{kind}-PM", label, pred.best, measured_best(actual), pred.predicted_fen, actual))
    return StudyTable(rows, len(skipped) * len(pipe.cfg.subset_kinds))


STUDY_COLUMNS = (("Model", "Test", "Predicted alg.", "Actual alg.", "Error")
                 + tuple(f"{k.value} {w}" for k in SOLVER_ORDER for w in ("predicted", "actual", "error")))


def emit_study_report(rows: Sequence[StudyRow], fmt: str = "csv", skipped: int = 0) -> str:
    """Per-instance table; a footer line counts rows skipped for lack of ground truth."""
    def cells(r: StudyRow, raw: bool) -> list:
        out = [r.model, r.test, r.predicted.value, r.actual.value, r.error]
        for k in SOLVER_ORDER:
            vals = (r.predicted_fen[k], r.actual_fen[k], r.fen_error(k))
            out += [repr(float(v)) if raw else fmt_k(v) for v in vals]
        return out

    text = _render(STUDY_COLUMNS, [cells(r, fmt == "csv") for r in rows], fmt)
    if skipped:
        text += f"# skipped rows without ground truth: {skipped}\n" if fmt == "csv" else \
            f"\nSkipped rows without ground truth: {skipped}\n"
    return text


# -- benchmark (PFR vs RO) -------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkRow:
    problem_label: str
    success_rate_a: int
    success_rate_b: int
    avg_fen_deviation_a: float
    avg_fen_deviation_b: float
    p_value: float
    tests: int
    degenerate: bool = False

    def __post_init__(self):
        for s in (self.success_rate_a, self.success_rate_b):
            if not 0 <= s <= self.tests:
                raise ValueError("success rate outside [0, tests]")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value outside [0, 1]")


@dataclass
class BenchmarkCase:
    label: str
    instance: COPInstance
    actual: Dict[SolverKind, float]
    pred_a: PredictionResult
    pred_b: PredictionResult


def label_text(label: str) -> str:
    obj, n_lin, n_quad = parse_label(label)
    parts = ([f"{n_lin}lin"] if n_lin else []) + ([f"{n_quad}Quad"] if n_quad else [])
    return f"{obj.capitalize()}, {', '.join(parts)}"


def benchmark_cases(pipe: Pipeline, label: str, model_a: PredictionModel, model_b: PredictionModel) -> List[BenchmarkCase]:
    obj, n_lin, n_quad = parse_label(label)
    spec = pipe.bench_spec(obj, n_lin, n_quad)
    cases = []
    for i in range(pipe.cfg.bench_instances):
        inst = random_instance(spec, _seed31(pipe.cfg.seed, ("bench", label, i)), id=f"{label}-{i + 1}")
        actual = pipe.measure(inst, ("bench", label, i))
        cases.append(BenchmarkCase(label, inst, actual, pipe.predict(model_a, inst), pipe.predict(model_b, inst)))
    return cases


def summarize(label: str, cases: Sequence[BenchmarkCase]) -> BenchmarkRow:
    dev_a = [abs(c.pred_a.predicted_fen[c.pred_a.best] - c.actual[c.pred_a.best]) for c in cases]
    dev_b = [abs(c.pred_b.predicted_fen[c.pred_b.best] - c.actual[c.pred_b.best]) for c in cases]
    succ_a = sum(is_success(c.pred_a.best, c.actual) for c in cases)
    succ_b = sum(is_success(c.pred_b.best, c.actual) for c in cases)
    w = welch(dev_a, dev_b)
    return BenchmarkRow(label_text(label), succ_a, succ_b, float(np.mean(dev_a)), float(np.mean(dev_b)),
                        w.p_value, len(cases), w.degenerate)


def run_benchmark(pipe: Pipeline, labels: Sequence[str], model_a: PredictionModel,
                  model_b: PredictionModel) -> List[BenchmarkRow]:
    """Fresh instances per label; model A is the PFR-trained one, B the RO-trained one."""
    return [summarize(label, benchmark_cases(pipe, label, model_a, model_b)) for label in labels]


def report_columns(name_a: str = "PFR-PM", name_b: str = "RO-PM") -> tuple:
    return ("Problem", f"Success rate {name_b}", f"Success rate {name_a}",
            f"Average deviation of FEN for {name_b}", f"Average deviation of FEN for {name_a}",
            "P value", "Tests", "Degenerate")


def emit_report(rows: Sequence[BenchmarkRow], fmt: str = "csv", name_a: str = "PFR-PM",
                name_b: str = "RO-PM") -> str:
    """Benchmark table; csv keeps raw values, markdown prints FEN in K units."""
    body = []
    for r in rows:
        if fmt == "csv":
            body.append([r.problem_label, str(r.success_rate_b), str(r.success_rate_a),
                         repr(r.avg_fen_deviation_b), repr(r.avg_fen_deviation_a), repr(r.p_value),
                         str(r.tests), str(int(r.degenerate))])
        else:
            body.append([r.problem_label, str(r.success_rate_b), str(r.success_rate_a),
                         fmt_k(r.avg_fen_deviation_b), fmt_k(r.avg_fen_deviation_a), f"{r.p_value:.3f}",
                         str(r.tests), "yes" if r.degenerate else ""])
    return _render(report_columns(name_a, name_b), body, fmt)


def parse_report_csv(text: str) -> List[BenchmarkRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if len(header) != len(report_columns()):
        raise ValueError("not a benchmark report")
    rows = []
    for cells in reader:
        if not cells:
            continue
        rows.append(BenchmarkRow(cells[0], int(cells[2]), int(cells[1]), float(cells[4]), float(cells[3]),
                                 float(cells[5]), int(cells[6]), bool(int(cells[7]))))
    return rows


def _render(columns, rows, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


# -- end to end -------------------------------------------------------------------

@dataclass
class PipelineResult:
    benchmark: List[BenchmarkRow]
    study: List[StudyRow]
    study_skipped: int = 0
    populations: Dict[str, List[EvolverResult]] = field(default_factory=dict)
    models: Dict[str, Dict[str, PredictionModel]] = field(default_factory=dict)


def run_pipeline(cfg: ExperimentConfig, out_dir=None) -> PipelineResult:
    """Evolve, train, run the subset study and the benchmark; write reports to ``out_dir``."""
    pipe = Pipeline(cfg)
    labels_by_obj: Dict[str, List[str]] = {}
    for label in cfg.bench_labels:
        labels_by_obj.setdefault(parse_label(label)[0], []).append(label)

    result = PipelineResult([], [])
    for obj in cfg.objectives:
        pops = pipe.evolve_all(obj)
        result.populations[obj] = pops
        held = {e.instance.id for e in held_out_extremes(pops)}
        kinds = list(cfg.subset_kinds) if obj == cfg.study_objective else []
        if obj in labels_by_obj:
            kinds += [k for k in ("PFR", "RO") if k not in kinds]
        models = train_models(pipe, pops, kinds, obj, held)
        result.models[obj] = models
        if obj == cfg.study_objective and cfg.subset_kinds:
            table = run_subset_study(pipe, pops, obj, models)
            result.study, result.study_skipped = table.rows, table.skipped
        if obj in labels_by_obj:
            result.benchmark += run_benchmark(pipe, labels_by_obj[obj], models["PFR"], models["RO"])
    order = {label_text(l): i for i, l in enumerate(cfg.bench_labels)}
    result.benchmark.sort(key=lambda r: order[r.problem_label])

    if out_dir is not None:
        write_outputs(result, cfg, out_dir)
    return result


def write_outputs(result: PipelineResult, cfg: ExperimentConfig, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    echo_config(cfg, out_dir)
    files = {
        "benchmark.csv": emit_report(result.benchmark, "csv"),
        "benchmark.md": emit_report(result.benchmark, "markdown"),
        "study.csv": emit_study_report(result.study, "csv", result.study_skipped),
        "study.md": emit_study_report(result.study, "markdown", result.study_skipped),
    }
    for name, text in files.items():
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text)
    mdir = os.path.join(out_dir, "models")
    os.makedirs(mdir, exist_ok=True)
    for obj, models in result.models.items():
        for kind, m in models.items():
            save_model(m, os.path.join(mdir, f"{obj}-{kind}.json"))
