"""Constraint features: the problem characteristics the predictor consumes."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from typing import Iterable, List, Sequence

import numpy as np

from .cop import COPInstance, ConstraintKind, violation

DEFAULT_SAMPLES = 10_000
DEFAULT_VICINITY = 0.1


@dataclass(frozen=True)
class FeatureVector:
    n_linear: int
    n_quadratic: int
    n_equality: int
    coeff_std: float
    coeff_std_per_constraint_mean: float
    angle_mean: float
    angle_min: float
    angle_max: float
    feasibility_ratio_near_optimum: float
    feasibility_ratio_global: float
    optimum_feasible: int
    dimension: int
    angles_valid: int

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        if len(values) != FEATURE_LENGTH:
            raise ValueError(f"expected {FEATURE_LENGTH} feature values, got {len(values)}")
        kw = {}
        for f, v in zip(fields(cls), values):
            kw[f.name] = int(round(v)) if f.type in ("int", int) else float(v)
        return cls(**kw)


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector))
FEATURE_LENGTH = len(FEATURE_NAMES)


@dataclass(frozen=True)
class NormStats:
    mean: tuple
    scale: tuple

    def apply(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        return (data - np.asarray(self.mean)) / np.asarray(self.scale)

    def invert(self, data) -> np.ndarray:
        return np.asarray(data, dtype=float) * np.asarray(self.scale) + np.asarray(self.mean)


def _as_matrix(dataset) -> np.ndarray:
    rows = [v.as_array() if isinstance(v, FeatureVector) else np.asarray(v, dtype=float) for v in dataset]
    if not rows:
        raise ValueError("cannot normalise an empty dataset")
    return np.vstack(rows)


def fit_norm(data) -> NormStats:
    """Per-column mean and standard deviation; constant columns get scale 1."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    # spread below round-off of the mean counts as constant
    const = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(const, 1.0, std)
    return NormStats(tuple(mean.tolist()), tuple(scale.tolist()))


def normalize_features(dataset) -> tuple:
    data = _as_matrix(dataset)
    stats = fit_norm(data)
    return stats.apply(data), stats


def _pairwise_angles(normals: List[np.ndarray]) -> List[float]:
    out = []
    for i in range(len(normals)):
        for j in range(i + 1, len(normals)):
            # Kahan's form stays accurate for nearly parallel normals, unlike acos
            a, b = normals[i], normals[j]
            ua, ub = a * np.linalg.norm(b), b * np.linalg.norm(a)
            out.append(2.0 * math.atan2(float(np.linalg.norm(ua - ub)), float(np.linalg.norm(ua + ub))))
    return out


def feasible_mask(instance: COPInstance, points: np.ndarray) -> np.ndarray:
    """Vectorised epsilon-feasibility of many points."""
    ok = np.ones(points.shape[0], dtype=bool)
    for c in instance.constraints:
        g = points * points @ np.asarray(c.quad) + points @ np.asarray(c.lin) + c.offset
        if c.is_equality:
            ok &= np.abs(g) <= instance.epsilon
        else:
            ok &= g <= 0.0
    return ok


def _ball_samples(rng, center, radius, lower, upper, n) -> np.ndarray:
    d = center.shape[0]
    chunks, have = [], 0
    while have < n:
        m = max(2 * (n - have), 64)
        z = rng.standard_normal((m, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        r = radius * rng.random(m) ** (1.0 / d)
        pts = center + z * r[:, None]
        pts = pts[np.all((pts >= lower) & (pts <= upper), axis=1)]
        chunks.append(pts)
        have += pts.shape[0]
    return np.vstack(chunks)[:n]


def extract_features(instance: COPInstance, n_samples: int = DEFAULT_SAMPLES,
                     vicinity_radius_fraction: float = DEFAULT_VICINITY, seed: int = 0) -> FeatureVector:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not 0.0 < vicinity_radius_fraction <= 1.0:
        raise ValueError("vicinity_radius_fraction must lie in (0, 1]")
    cons = instance.constraints
    counts = {k: sum(c.kind is k for c in cons) for k in ConstraintKind}

    lin = [np.asarray(c.lin) for c in cons]
    coeff_std = float(np.std(np.concatenate(lin))) if lin else 0.0
    per_std = float(np.mean([np.std(v) for v in lin])) if lin else 0.0

    opt = instance.optimum
    normals = [c.gradient(opt) for c in cons]
    normals = [g for g in normals if np.any(g != 0.0)]
    angles = _pairwise_angles(normals)
    valid = len(angles) > 0 and len(normals) == len(cons)
    if angles:
        a_mean, a_min, a_max = float(np.mean(angles)), float(np.min(angles)), float(np.max(angles))
    else:
        a_mean = a_min = a_max = 0.0

    rng = np.random.default_rng(seed)
    lower = np.asarray(instance.space.lower)
    upper = np.asarray(instance.space.upper)
    if cons:
        box = rng.uniform(lower, upper, (n_samples, instance.dimension))
        ratio_global = float(feasible_mask(instance, box).mean())
        radius = vicinity_radius_fraction * float(np.mean(upper - lower))
        near = _ball_samples(rng, opt, radius, lower, upper, n_samples)
        ratio_near = float(feasible_mask(instance, near).mean())
    else:
        ratio_global = ratio_near = 1.0

    return FeatureVector(
        n_linear=counts[ConstraintKind.LINEAR],
        n_quadratic=counts[ConstraintKind.QUADRATIC],
        n_equality=counts[ConstraintKind.EQUALITY],
        coeff_std=coeff_std,
        coeff_std_per_constraint_mean=per_std,
        angle_mean=a_mean,
        angle_min=a_min,
        angle_max=a_max,
        feasibility_ratio_near_optimum=ratio_near,
        feasibility_ratio_global=ratio_global,
        optimum_feasible=int(violation(instance, opt)[0] == 0.0),
        dimension=instance.dimension,
        angles_valid=int(valid),
    )


def write_feature_table(rows: Iterable, path) -> None:
    """``rows`` holds ``(instance_id, FeatureVector)`` pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("instance_id",) + FEATURE_NAMES)
        for iid, fv in rows:
            w.writerow([iid] + [repr(v) for v in astuple(fv)])


def read_feature_table(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[1:]) != FEATURE_NAMES:
            raise ValueError("feature table header does not match the feature layout")
        return [(row[0], FeatureVector.from_array([float(v) for v in row[1:]])) for row in reader]
