"""Constrained continuous optimisation problems.

An instance is a box-bounded objective (Sphere, Ackley or Rosenbrock) plus an
ordered list of diagonal-quadratic constraints

    g(x) = sum_i quad[i] * x_i**2 + sum_i lin[i] * x_i + offset

where inequalities mean ``g(x) <= 0`` and equalities are relaxed to
``|g(x)| <= epsilon``.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

DEFAULT_EPSILON = 1e-4


class ContractError(ValueError):
    """Raised when a caller violates an operation's preconditions."""


class GenerationError(RuntimeError):
    def __init__(self, message: str, retries: int):
        super().__init__(f"{message} (after {retries} retries)")
        self.retries = retries


class InstanceParseError(ValueError):
    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.field = field
        self.line = line


class Objective(str, enum.Enum):
    SPHERE = "sphere"
    ACKLEY = "ackley"
    ROSENBROCK = "rosenbrock"

    @property
    def code(self) -> int:
        return _OBJECTIVE_CODES[self]

    def optimum(self, dimension: int) -> np.ndarray:
        if self is Objective.ROSENBROCK:
            return np.ones(dimension)
        return np.zeros(dimension)

    @property
    def optimum_value(self) -> float:
        return 0.0


_OBJECTIVE_CODES = {Objective.SPHERE: 0, Objective.ACKLEY: 1, Objective.ROSENBROCK: 2}


class ConstraintKind(str, enum.Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    EQUALITY = "equality"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]


_KIND_CODES = {ConstraintKind.LINEAR: 0, ConstraintKind.QUADRATIC: 1, ConstraintKind.EQUALITY: 2}


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


@dataclass(frozen=True)
class SearchSpace:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) < 1 or len(self.lower) != len(self.upper):
            raise ContractError("search space needs matching lower/upper vectors of length >= 1")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ContractError("every lower bound must be strictly below its upper bound")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @classmethod
    def cube(cls, dimension: int, low: float = -5.0, high: float = 5.0) -> "SearchSpace":
        return cls((low,) * dimension, (high,) * dimension)

    @property
    def width(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class Constraint:
    kind: ConstraintKind
    quad: tuple
    lin: tuple
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        object.__setattr__(self, "quad", tuple(float(v) for v in self.quad))
        object.__setattr__(self, "lin", tuple(float(v) for v in self.lin))
        object.__setattr__(self, "offset", float(self.offset))
        if len(self.quad) != len(self.lin):
            raise ContractError("quad and lin must have the same length")
        if self.kind is ConstraintKind.LINEAR:
            if any(self.quad):
                raise ContractError("a linear constraint has no quadratic terms")
            if not any(self.lin):
                raise ContractError("a linear constraint needs a non-zero normal")
        elif self.kind is ConstraintKind.QUADRATIC and not any(self.quad):
            raise ContractError("a quadratic constraint needs a non-zero quadratic term")

    @property
    def is_equality(self) -> bool:
        return self.kind is ConstraintKind.EQUALITY

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.dot(self.quad, x * x) + np.dot(self.lin, x) + self.offset)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 2.0 * np.asarray(self.quad) * x + np.asarray(self.lin)

    def scaled(self, factor: float) -> "Constraint":
        return Constraint(self.kind, tuple(factor * q for q in self.quad),
                          tuple(factor * l for l in self.lin), factor * self.offset)


@dataclass(frozen=True)
class COPInstance:
    id: str
    objective: Objective
    constraints: tuple
    space: SearchSpace
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if not self.epsilon > 0:
            raise ContractError("epsilon must be positive")
        for c in self.constraints:
            if len(c.lin) != self.space.dimension:
                raise ContractError("constraint coefficient vectors must have length D")
        opt = self.optimum
        if not self.space.contains(opt):
            raise ContractError("the known optimum must lie inside the search space")

    @property
    def dimension(self) -> int:
        return self.space.dimension

    @property
    def optimum(self) -> np.ndarray:
        return self.objective.optimum(self.dimension)

    @property
    def optimum_value(self) -> float:
        return self.objective.optimum_value

    @cached_property
    def packed(self) -> tuple:
        """Array form consumed by the compiled solver loops.

        ``(objective_code, quad[m, D], lin[m, D], offset[m], kind_codes[m],
        epsilon, lower[D], upper[D], optimum_value)``
        """
        m, d = len(self.constraints), self.dimension
        quad = np.zeros((m, d))
        lin = np.zeros((m, d))
        offset = np.zeros(m)
        kinds = np.zeros(m, dtype=np.int64)
        for i, c in enumerate(self.constraints):
            quad[i] = c.quad
            lin[i] = c.lin
            offset[i] = c.offset
            kinds[i] = c.kind.code
        return (self.objective.code, quad, lin, offset, kinds, self.epsilon,
                np.asarray(self.space.lower), np.asarray(self.space.upper),
                float(self.optimum_value))

    def with_constraints(self, constraints: Sequence[Constraint], id: Optional[str] = None) -> "COPInstance":
        return COPInstance(id if id is not None else self.id, self.objective, tuple(constraints),
                           self.space, self.epsilon)


@dataclass(frozen=True)
class EvaluatedPoint:
    x: tuple
    f: float
    phi: float
    per_constraint: tuple


# -- objectives -------------------------------------------------------------

def _check_dim(instance: COPInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != instance.dimension:
        raise ContractError(f"expected a vector of length {instance.dimension}, got shape {x.shape}")
    return x


def objective_value(objective: Objective, x: np.ndarray) -> float:
    objective = Objective(objective)
    if objective is Objective.SPHERE:
        return float(np.dot(x, x))
    if objective is Objective.ACKLEY:
        d = x.shape[0]
        a = -20.0 * math.exp(-0.2 * math.sqrt(float(np.dot(x, x)) / d))
        b = -math.exp(float(np.sum(np.cos(2.0 * math.pi * x))) / d)
        return a + b + 20.0 + math.e
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def evaluate_objective(instance: COPInstance, x) -> float:
    x = _check_dim(instance, x)
    return objective_value(instance.objective, x)


def violation(instance: COPInstance, x) -> tuple:
    """Total violation ``phi`` and the per-constraint violations at ``x``."""
    x = _check_dim(instance, x)
    per = np.empty(len(instance.constraints))
    for i, c in enumerate(instance.constraints):
        g = c.value(x)
        per[i] = max(0.0, abs(g) - instance.epsilon) if c.is_equality else max(0.0, g)
    return float(per.sum()), per


def evaluate(instance: COPInstance, x) -> EvaluatedPoint:
    x = _check_dim(instance, x)
    f = evaluate_objective(instance, x)
    phi, per = violation(instance, x)
    if not math.isfinite(f):
        f, phi = math.inf, math.inf
    return EvaluatedPoint(tuple(x), f, phi, tuple(per))


def epsilon_compare(a, b, eps_level: float) -> Ordering:
    """Order two ``(f, phi)`` pairs under the epsilon-level comparison.

    ``LESS`` means ``a`` is the better point. Pairs whose violations both sit
    at or below ``eps_level`` (or are equal) are compared on ``f``; otherwise
    the smaller violation wins.
    """
    fa, pa = a
    fb, pb = b
    if any(math.isnan(v) for v in (fa, pa, fb, pb, eps_level)):
        raise FloatingPointError("NaN in epsilon comparison")
    if (pa <= eps_level and pb <= eps_level) or pa == pb:
        ka, kb = fa, fb
    else:
        ka, kb = pa, pb
    if ka < kb:
        return Ordering.LESS
    if ka > kb:
        return Ordering.GREATER
    return Ordering.EQUAL


# -- random generation --------------------------------------------------------

@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for random instances.

    ``slack_range`` bounds ``g(x*)``, the constraint value at the known
    optimum; the stored offset is solved from it. With ``optimum_feasible``
    True every draw with positive slack is retried, with False the instance is
    redrawn until the optimum is violated, with None nothing is enforced.
    """

    objective: Objective = Objective.SPHERE
    dimension: int = 5
    n_linear: int = 0
    n_quadratic: int = 0
    n_equality: int = 0
    lin_range: tuple = (-1.0, 1.0)
    quad_range: tuple = (-1.0, 1.0)
    slack_range: tuple = (-1.0, 0.25)
    optimum_feasible: Optional[bool] = True
    lower: float = -5.0
    upper: float = 5.0
    epsilon: float = DEFAULT_EPSILON
    max_retries: int = 100

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))

    @property
    def n_constraints(self) -> int:
        return self.n_linear + self.n_quadratic + self.n_equality

    @property
    def label(self) -> str:
        parts = []
        if self.n_linear:
            parts.append(f"{self.n_linear}lin")
        if self.n_quadratic:
            parts.append(f"{self.n_quadratic}quad")
        if self.n_equality:
            parts.append(f"{self.n_equality}eq")
        name = self.objective.value.capitalize()
        return f"{name}, {' '.join(parts)}" if parts else name


def constraint_from_slack(kind: ConstraintKind, quad, lin, slack: float, optimum: np.ndarray) -> Constraint:
    """Build a constraint whose value at ``optimum`` equals ``slack``."""
    quad = np.asarray(quad, dtype=float)
    lin = np.asarray(lin, dtype=float)
    offset = slack - float(np.dot(quad, optimum * optimum) + np.dot(lin, optimum))
    return Constraint(kind, tuple(quad), tuple(lin), offset)


def _draw_nonzero(rng: np.random.Generator, lo: float, hi: float, d: int) -> np.ndarray:
    while True:
        v = rng.uniform(lo, hi, d)
        if np.any(v != 0.0):
            return v


def random_instance(spec: GeneratorSpec, rng_seed: int, id: Optional[str] = None) -> COPInstance:
    rng = np.random.default_rng(rng_seed)
    d = spec.dimension
    space = SearchSpace.cube(d, spec.lower, spec.upper)
    opt = spec.objective.optimum(d)
    kinds = ([ConstraintKind.LINEAR] * spec.n_linear + [ConstraintKind.QUADRATIC] * spec.n_quadratic
             + [ConstraintKind.EQUALITY] * spec.n_equality)
    iid = id if id is not None else f"{spec.objective.value}-{d}d-{rng_seed}"

    def draw(kind):
        lin = _draw_nonzero(rng, *spec.lin_range, d)
        quad = np.zeros(d)
        if kind is ConstraintKind.QUADRATIC:
            quad = _draw_nonzero(rng, *spec.quad_range, d)
        if kind is ConstraintKind.EQUALITY:
            return constraint_from_slack(kind, quad, lin, 0.0, opt)
        return constraint_from_slack(kind, quad, lin, rng.uniform(*spec.slack_range), opt)

    if spec.optimum_feasible:
        constraints = []
        for kind in kinds:
            for _ in range(spec.max_retries):
                c = draw(kind)
                if c.is_equality or c.value(opt) <= 0.0:
                    constraints.append(c)
                    break
            else:
                raise GenerationError("could not keep the optimum feasible", spec.max_retries)
        return COPInstance(iid, spec.objective, constraints, space, spec.epsilon)

    for _ in range(spec.max_retries):
        inst = COPInstance(iid, spec.objective, [draw(k) for k in kinds], space, spec.epsilon)
        if spec.optimum_feasible is None or violation(inst, opt)[0] > 0.0:
            return inst
    raise GenerationError("could not make the optimum infeasible", spec.max_retries)


# -- canonical text document -----------------------------------------------------

_FIELDS = ("id", "objective", "dimension", "lower", "upper", "epsilon", "constraints")
_CONSTRAINT_FIELDS = ("kind", "quad", "lin", "offset")


def serialize(instance: COPInstance) -> str:
    doc = {
        "id": instance.id,
        "objective": instance.objective.value,
        "dimension": instance.dimension,
        "lower": list(instance.space.lower),
        "upper": list(instance.space.upper),
        "epsilon": instance.epsilon,
        "constraints": [
            {"kind": c.kind.value, "quad": list(c.quad), "lin": list(c.lin), "offset": c.offset}
            for c in instance.constraints
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def _line_of(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return lineno
    return None


def deserialize(text: str) -> COPInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"malformed instance document: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise InstanceParseError("instance document must be an object", line=1)
    for key in doc:
        if key not in _FIELDS:
            warnings.warn(f"ignoring unknown instance field {key!r}", stacklevel=2)
    for key in _FIELDS:
        if key not in doc:
            raise InstanceParseError(f"missing required field {key!r}", field=key)

    def floats(value, key):
        try:
            return tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise InstanceParseError("expected an array of numbers", field=key, line=_line_of(text, key)) from None

    try:
        constraints = []
        for i, c in enumerate(doc["constraints"]):
            for key in _CONSTRAINT_FIELDS:
                if key not in c:
                    raise InstanceParseError(f"constraint {i} lacks {key!r}", field=f"constraints[{i}].{key}")
            for key in c:
                if key not in _CONSTRAINT_FIELDS:
                    warnings.warn(f"ignoring unknown constraint field {key!r}", stacklevel=2)
            constraints.append(Constraint(ConstraintKind(c["kind"]), floats(c["quad"], "quad"),
                                          floats(c["lin"], "lin"), float(c["offset"])))
        space = SearchSpace(floats(doc["lower"], "lower"), floats(doc["upper"], "upper"))
        if space.dimension != int(doc["dimension"]):
            raise InstanceParseError("dimension disagrees with bounds", field="dimension",
                                     line=_line_of(text, "dimension"))
        return COPInstance(str(doc["id"]), Objective(doc["objective"]), constraints, space, float(doc["epsilon"]))
    except InstanceParseError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise InstanceParseError(f"invalid instance document: {exc}") from None
