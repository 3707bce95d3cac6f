import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import linear, make_instance
from copselect.cop import Constraint, ConstraintKind, GeneratorSpec, Objective, random_instance
from copselect.features import (FEATURE_LENGTH, FEATURE_NAMES, FeatureVector, extract_features, feasible_mask,
                                fit_norm, normalize_features, read_feature_table, write_feature_table)
from copselect.model import N_IN
from copselect.solvers import ENCODED_FIELDS


def test_layout_is_fixed():
    assert FEATURE_NAMES[:3] == ("n_linear", "n_quadratic", "n_equality")
    assert FEATURE_LENGTH == 13
    assert N_IN == FEATURE_LENGTH + 3 * len(ENCODED_FIELDS)


def test_no_constraints():
    fv = extract_features(make_instance(d=3), n_samples=100)
    assert fv.feasibility_ratio_global == 1.0 and fv.feasibility_ratio_near_optimum == 1.0
    assert (fv.n_linear, fv.n_quadratic, fv.n_equality) == (0, 0, 0)
    assert fv.angles_valid == 0


def test_orthogonal_normals():
    inst = make_instance(constraints=[linear([1.0, 0.0]), linear([0.0, 1.0])])
    fv = extract_features(inst, n_samples=100)
    assert fv.angle_mean == fv.angle_min == fv.angle_max == pytest.approx(math.pi / 2)
    assert fv.angles_valid == 1


def test_half_box_ratio():
    inst = make_instance(constraints=[linear([1.0, 0.0])], low=-1.0, high=1.0)
    fv = extract_features(inst, n_samples=100_000, seed=4)
    assert abs(fv.feasibility_ratio_global - 0.5) <= 0.01


def test_zero_gradient_quadratic_flags_validity():
    # g = x1^2 + x2 - 1 has gradient (0, 1) at the origin, g = x1^2 - 1 has a zero gradient there
    q_ok = Constraint(ConstraintKind.QUADRATIC, [1.0, 0.0], [0.0, 1.0], -1.0)
    q_zero = Constraint(ConstraintKind.QUADRATIC, [1.0, 0.0], [0.0, 0.0], -1.0)
    fv = extract_features(make_instance(constraints=[q_ok, q_zero, linear([1.0, 1.0], -1.0)]), n_samples=100)
    assert fv.angles_valid == 0
    assert fv.angle_mean == pytest.approx(math.pi / 4)


def test_feasible_mask_matches_scalar_violation():
    inst = random_instance(GeneratorSpec(Objective.SPHERE, 4, 2, 2, n_equality=0), 5)
    pts = np.random.default_rng(0).uniform(-5, 5, (500, 4))
    from copselect.cop import violation
    want = np.array([violation(inst, p)[0] == 0.0 for p in pts])
    assert np.array_equal(feasible_mask(inst, pts), want)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.floats(0.01, 100))
def test_angles_invariant_to_scaling(a, b, lam):
    if not any(a) or not any(b):
        return
    inst = make_instance(constraints=[linear(a), linear(b)])
    scaled = make_instance(constraints=[linear(a).scaled(lam), linear(b)])
    f1, f2 = extract_features(inst, n_samples=10), extract_features(scaled, n_samples=10)
    assert f1.angle_mean == pytest.approx(f2.angle_mean, abs=1e-9)
    assert 0.0 <= f1.angle_min <= f1.angle_max <= math.pi


def test_angle_symmetry():
    a, b = linear([1.0, 2.0, 0.5]), linear([-1.0, 0.3, 2.0])
    f_ab = extract_features(make_instance(constraints=[a, b]), n_samples=10)
    f_ba = extract_features(make_instance(constraints=[b, a]), n_samples=10)
    assert f_ab.angle_mean == f_ba.angle_mean
    same = extract_features(make_instance(constraints=[a, a]), n_samples=10)
    assert same.angle_mean == pytest.approx(0.0, abs=1e-7)


@given(st.integers(0, 1000), st.integers(0, 3), st.integers(0, 3))
def test_ratios_in_unit_interval(seed, nl, nq):
    fv = extract_features(random_instance(GeneratorSpec(Objective.ACKLEY, 3, nl, nq), seed), n_samples=200, seed=seed)
    assert 0.0 <= fv.feasibility_ratio_global <= 1.0 and 0.0 <= fv.feasibility_ratio_near_optimum <= 1.0
    assert fv.optimum_feasible == 1


def test_deterministic():
    inst = random_instance(GeneratorSpec(Objective.SPHERE, 5, 2, 2), 1)
    assert extract_features(inst, 2000, seed=9) == extract_features(inst, 2000, seed=9)


def test_monte_carlo_error_halves_with_4x_samples():
    # standard error scales as 1/sqrt(n): quadrupling n halves it
    inst = make_instance(constraints=[linear([1.0, 0.3, 0.0])], low=-1.0, high=1.0)
    se = []
    for n in (1000, 4000):
        est = [extract_features(inst, n, seed=s).feasibility_ratio_global for s in range(30)]
        se.append(np.std(est))
    assert 1.0 / 1.5 <= se[0] / se[1] / 2.0 <= 1.5


def test_doubling_samples_shrinks_error_by_sqrt2():
    inst = make_instance(constraints=[linear([1.0, 0.3, 0.0])], low=-1.0, high=1.0)
    se = []
    for n in (1000, 2000):
        est = [extract_features(inst, n, seed=s).feasibility_ratio_global for s in range(30)]
        se.append(np.std(est))
    assert 1.0 / 1.5 <= se[0] / se[1] / math.sqrt(2.0) <= 1.5


class TestNormalisation:
    def test_identical_vectors_map_to_zero(self):
        z, stats = normalize_features([np.ones(4) * 3.0] * 5)
        assert np.all(z == 0.0)

    def test_symmetric_pair(self):
        v = np.array([1.0, -2.0, 0.0, 4.0])
        z, _ = normalize_features([v, -v])
        assert np.allclose(z[0, [0, 1, 3]], 1.0 * np.sign(v[[0, 1, 3]]))
        assert np.allclose(z[1, [0, 1, 3]], -np.sign(v[[0, 1, 3]]))
        assert z[0, 2] == 0.0

    def test_stored_stats_reproduce(self):
        data = np.random.default_rng(1).normal(size=(20, 5))
        z, stats = normalize_features(list(data))
        assert np.array_equal(stats.apply(data), z)
        assert np.allclose(stats.invert(z), data)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            normalize_features([])

    def test_fit_norm_constant_column(self):
        s = fit_norm(np.array([[1.0, 2.0], [1.0, 4.0]]))
        assert s.scale[0] == 1.0


def test_feature_table_round_trip(tmp_path):
    rows = [(f"i{s}", extract_features(random_instance(GeneratorSpec(Objective.SPHERE, 3, 1, 1), s), 100))
            for s in range(3)]
    write_feature_table(rows, tmp_path / "f.csv")
    assert read_feature_table(tmp_path / "f.csv") == rows
    assert FeatureVector.from_array(rows[0][1].as_array()) == rows[0][1]
