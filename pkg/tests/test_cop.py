import json
import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import linear, make_instance
from copselect.cop import (COPInstance, Constraint, ConstraintKind, ContractError, GenerationError, GeneratorSpec,
                           InstanceParseError, Objective, Ordering, SearchSpace, deserialize, epsilon_compare,
                           evaluate, evaluate_objective, random_instance, serialize, violation)

finite = st.floats(-1e6, 1e6, allow_nan=False)
nonneg = st.floats(0, 1e6, allow_nan=False)


class TestObjectives:
    def test_sphere_origin(self):
        assert evaluate_objective(make_instance("sphere", d=2), np.zeros(2)) == 0.0

    def test_rosenbrock_ones(self):
        assert evaluate_objective(make_instance("rosenbrock", d=5), np.ones(5)) == 0.0

    def test_ackley_origin_against_high_precision(self):
        mpmath.mp.dps = 50
        d = 10
        ref = -20 * mpmath.exp(-0.2 * mpmath.sqrt(0)) - mpmath.exp(mpmath.mpf(d) / d) + 20 + mpmath.e
        value = evaluate_objective(make_instance("ackley", d=d), np.zeros(d))
        assert abs(value - float(ref)) <= 1e-12

    @pytest.mark.parametrize("obj", list(Objective))
    def test_known_optimum_value(self, obj):
        inst = make_instance(obj.value, d=7)
        assert abs(evaluate_objective(inst, inst.optimum) - inst.optimum_value) <= 1e-9

    def test_dimension_mismatch(self, sphere5):
        with pytest.raises(ContractError):
            evaluate_objective(sphere5, np.zeros(4))

    def test_rosenbrock_overflow_is_worst(self):
        inst = make_instance("rosenbrock", d=3, low=-1e200, high=1e200)
        p = evaluate(inst, np.full(3, 1e160))
        assert p.f == math.inf and p.phi == math.inf


class TestViolation:
    def test_strictly_feasible(self):
        inst = make_instance(constraints=[linear([1.0, 0.0])])
        assert violation(inst, [-1.0, 0.0])[0] == 0.0

    def test_violated_linear(self):
        inst = make_instance(constraints=[linear([1.0, 0.0])])
        assert violation(inst, [2.0, 0.0])[0] == 2.0

    def test_equality_tube(self):
        eq = Constraint(ConstraintKind.EQUALITY, [0.0, 0.0], [1.0, 0.0], 0.0)
        inst = make_instance(constraints=[eq])
        assert violation(inst, [5e-5, 0.0])[0] == 0.0
        assert violation(inst, [3e-4, 0.0])[0] == pytest.approx(2e-4)

    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
           st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(-3, 3))
    def test_phi_zero_iff_all_satisfied(self, x, lin, off):
        if not any(lin):
            lin[0] = 1.0
        q = Constraint(ConstraintKind.QUADRATIC, [0.5, -0.3, 0.1], lin, off)
        l = linear(lin, -off)
        inst = make_instance(constraints=[q, l])
        phi, per = violation(inst, x)
        sat = all(c.value(x) <= 0 for c in (q, l))
        assert (phi == 0.0) == sat
        assert phi == pytest.approx(per.sum())


class TestEpsilonCompare:
    def test_feasibility_dominates(self):
        assert epsilon_compare((5.0, 0.0), (3.0, 0.7), 0.0) is Ordering.LESS

    @pytest.mark.parametrize("level", [0.0, 0.5, math.inf])
    def test_both_feasible_f_decides(self, level):
        assert epsilon_compare((5.0, 0.0), (3.0, 0.0), level) is Ordering.GREATER

    def test_within_level_f_decides(self):
        assert epsilon_compare((9.0, 0.3), (1.0, 0.5), 1.0) is Ordering.GREATER

    def test_nan_raises(self):
        with pytest.raises(FloatingPointError):
            epsilon_compare((math.nan, 0.0), (1.0, 0.0), 0.0)

    @given(finite, nonneg, finite, nonneg, nonneg)
    def test_antisymmetric(self, fa, pa, fb, pb, level):
        assert epsilon_compare((fa, pa), (fb, pb), level) == -epsilon_compare((fb, pb), (fa, pa), level)

    @given(finite, nonneg, finite, nonneg)
    def test_infinite_level_is_f_order(self, fa, pa, fb, pb):
        got = epsilon_compare((fa, pa), (fb, pb), math.inf)
        assert got == Ordering((fa > fb) - (fa < fb))

    @given(finite, nonneg, finite, nonneg)
    def test_zero_level_is_lexicographic(self, fa, pa, fb, pb):
        got = epsilon_compare((fa, pa), (fb, pb), 0.0)
        want = (pa, fa) > (pb, fb)
        want = Ordering(int(want) - int((pa, fa) < (pb, fb)))
        assert got == want


class TestGeneration:
    def test_optimum_feasible(self):
        inst = random_instance(GeneratorSpec(Objective.SPHERE, 2, n_linear=1, optimum_feasible=True), 7)
        assert violation(inst, inst.optimum)[0] == 0.0

    def test_no_constraints(self):
        inst = random_instance(GeneratorSpec(Objective.SPHERE, 2), 3)
        assert inst.constraints == ()
        assert violation(inst, [4.0, -4.0])[0] == 0.0

    def test_deterministic_bytes(self):
        spec = GeneratorSpec(Objective.ACKLEY, 4, 2, 2)
        assert serialize(random_instance(spec, 11)) == serialize(random_instance(spec, 11))

    def test_impossible_spec_reports_retries(self):
        spec = GeneratorSpec(Objective.SPHERE, 2, n_linear=1, slack_range=(0.5, 1.0), max_retries=7)
        with pytest.raises(GenerationError) as err:
            random_instance(spec, 0)
        assert err.value.retries == 7

    def test_infeasible_optimum_requested(self):
        spec = GeneratorSpec(Objective.SPHERE, 3, n_linear=2, slack_range=(-1, 1), optimum_feasible=False)
        inst = random_instance(spec, 5)
        assert violation(inst, inst.optimum)[0] > 0.0

    @given(st.integers(0, 2 ** 31 - 1), st.sampled_from(list(Objective)), st.integers(0, 3), st.integers(0, 3))
    def test_feasible_flag_holds(self, seed, obj, nl, nq):
        inst = random_instance(GeneratorSpec(obj, 4, nl, nq), seed)
        assert violation(inst, inst.optimum)[0] == 0.0
        assert len(inst.constraints) == nl + nq


class TestSerialization:
    def test_round_trip_many(self):
        for seed in range(100):
            spec = GeneratorSpec(list(Objective)[seed % 3], 2 + seed % 4, seed % 3, (seed // 3) % 3, seed % 2)
            inst = random_instance(spec, seed)
            assert deserialize(serialize(inst)) == inst

    def test_field_order_is_fixed(self, sphere5):
        doc = json.loads(serialize(sphere5))
        assert list(doc) == ["id", "objective", "dimension", "lower", "upper", "epsilon", "constraints"]

    def test_missing_epsilon_named(self, sphere5):
        doc = json.loads(serialize(sphere5))
        del doc["epsilon"]
        with pytest.raises(InstanceParseError) as err:
            deserialize(json.dumps(doc))
        assert err.value.field == "epsilon" and "epsilon" in str(err.value)

    def test_unknown_field_warns(self, sphere5):
        doc = json.loads(serialize(sphere5))
        doc["comment"] = "x"
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            assert deserialize(json.dumps(doc)) == sphere5
        assert any("comment" in str(w.message) for w in caught)

    def test_malformed_has_line(self, sphere5):
        text = serialize(sphere5).replace('"dimension": 5,', '"dimension": 5,,')
        with pytest.raises(InstanceParseError) as err:
            deserialize(text)
        assert err.value.line == 4


class TestContracts:
    def test_linear_rejects_quadratic_terms(self):
        with pytest.raises(ContractError):
            Constraint(ConstraintKind.LINEAR, [1.0], [1.0], 0.0)

    def test_space_bounds(self):
        with pytest.raises(ContractError):
            SearchSpace((1.0,), (0.0,))

    def test_optimum_inside_space(self):
        with pytest.raises(ContractError):
            COPInstance("x", Objective.ROSENBROCK, (), SearchSpace.cube(2, -2.0, 0.5))
