import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_instance
from copselect.cop import GeneratorSpec, Objective, violation
from copselect.evolver import (EvolvedInstance, EvolverConfig, EvolverResult, Genome, SelectionError, SubsetKind,
                               SubsetTag, crowding_distance, dominates, dump_population, evolve, load_population,
                               non_dominated_sort, objective_vector, select_subset, truncate)
from copselect.solvers import SolverKind

DE, ES, PSO = SolverKind.DE, SolverKind.ES, SolverKind.PSO
BASE = GeneratorSpec(Objective.SPHERE, 3, 1, 1, lin_range=(-5, 5), quad_range=(-5, 5), slack_range=(-1, 0))
TINY = EvolverConfig(population_size=6, generations=2, inner_budget=1500, inner_repeats=1)


def _s(de, es, pso):
    return {DE: float(de), ES: float(es), PSO: float(pso)}


class TestDominance:
    def test_hard_sense_prefers_slow_target_and_fast_others(self):
        assert dominates(_s(200, 50, 50), _s(100, 60, 60), DE)
        assert not dominates(_s(200, 80, 80), _s(100, 60, 60), DE)

    def test_easy_sense_is_mirrored(self):
        assert dominates(_s(100, 60, 60), _s(200, 50, 50), DE, "easy")

    def test_irreflexive(self):
        s = _s(1, 2, 3)
        assert not dominates(s, s, ES)

    @given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=30))
    def test_sort_partitions_and_fronts_are_non_dominated(self, pts):
        objs = np.array(pts, dtype=float)
        fronts = non_dominated_sort(objs)
        assert sorted(i for f in fronts for i in f) == list(range(len(pts)))
        for f in fronts:
            for i in f:
                for j in f:
                    assert not (np.all(objs[i] <= objs[j]) and np.any(objs[i] < objs[j]))

    @given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=30))
    def test_first_front_brute_force(self, pts):
        objs = np.array(pts, dtype=float)
        brute = [i for i in range(len(pts))
                 if not any(np.all(objs[j] <= objs[i]) and np.any(objs[j] < objs[i]) for j in range(len(pts)))]
        assert sorted(non_dominated_sort(objs)[0]) == brute

    def test_crowding_keeps_extremes(self):
        objs = np.array([[0.0, 5.0], [1.0, 4.0], [1.1, 3.9], [1.2, 3.8], [5.0, 0.0]])
        kept = truncate(objs, 3)
        assert 0 in kept and 4 in kept
        assert np.isinf(crowding_distance(objs)[[0, 4]]).all()

    def test_objective_vector_uses_mean_of_others(self):
        assert np.array_equal(objective_vector(_s(10, 2, 4), DE), [-10.0, 3.0])


class TestGenome:
    @given(st.integers(0, 10_000))
    def test_decoded_instances_keep_optimum_feasible(self, seed):
        g = Genome(BASE, EvolverConfig())
        rng = np.random.default_rng(seed)
        inst = g.decode(g.random(rng), "x")
        assert violation(inst, inst.optimum)[0] == 0.0
        assert len(inst.constraints) == 2

    @given(st.integers(0, 10_000))
    def test_variation_stays_in_bounds(self, seed):
        cfg = EvolverConfig()
        g = Genome(BASE, cfg)
        rng = np.random.default_rng(seed)
        trial = g.vary(rng, *(g.random(rng) for _ in range(4)))
        assert np.all(trial >= g.lower) and np.all(trial <= g.upper)
        inst = g.decode(trial, "t")
        for c in inst.constraints:
            assert -1.0 <= c.value(inst.optimum) <= 0.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EvolverConfig(slack_bounds=(-1.0, 0.5))
        with pytest.raises(ValueError):
            EvolverConfig(sense="medium")


@pytest.fixture(scope="module")
def run():
    return evolve(TINY, BASE, seed=3)


class TestEvolve:
    def test_zero_generations_is_random_pool(self):
        res = evolve(EvolverConfig(population_size=5, generations=0, inner_budget=1000, inner_repeats=1), BASE, 1)
        assert len(res.population) == 5
        assert all(e.subset_tags == frozenset({SubsetTag.RANDOM}) for e in res.population)

    def test_front_is_pairwise_non_dominated(self, run):
        f = run.front()
        assert f
        for a in f:
            for b in f:
                assert not dominates(a.scores, b.scores, DE)

    def test_history_monotone(self, run):
        # the replacement rule never discards a non-dominated maximum of the target FEN
        assert all(b >= a for a, b in zip(run.history, run.history[1:]))
        assert len(run.history) == TINY.generations + 1

    def test_archive_holds_every_evaluation(self, run):
        assert len(run.archive) == TINY.population_size * (TINY.generations + 1)

    def test_deterministic(self, run):
        again = evolve(TINY, BASE, seed=3)
        assert [e.scores for e in again.population] == [e.scores for e in run.population]

    def test_dump_load_round_trip(self, run, tmp_path):
        dump_population(run, tmp_path)
        back = load_population(tmp_path)
        assert back.config == run.config and back.base == run.base
        assert [(e.instance, e.scores, e.pareto_rank, e.subset_tags) for e in back.population] == \
               [(e.instance, e.scores, e.pareto_rank, e.subset_tags) for e in run.population]
        assert len(back.archive) == len(run.archive)


def _member(i, scores, rank, tags, target=DE):
    return EvolvedInstance(make_instance(id=f"m{i}"), scores, target, rank, frozenset(tags))


def _synthetic_population(offset=0):
    pop = []
    for i in range(6):
        rank = 1 if i < 3 else 2
        tags = {SubsetTag.RANDOM} | ({SubsetTag.FRONT} if rank == 1 else set())
        # rank-1 members trade a slower target for slower others
        pop.append(_member(offset + i, _s(100 + 10 * i, 40 + 5 * i, 40 + 5 * i), rank, tags))
    archive = pop + [_member(offset + 10 + i, _s(10, 10, 10), 3, {SubsetTag.RANDOM}) for i in range(20)]
    return EvolverResult(pop, archive, EvolverConfig(), BASE)


class TestSelection:
    pops = [_synthetic_population(100 * k) for k in range(5)]

    def test_ep_takes_two_endpoints_per_front(self):
        got = select_subset(self.pops, "EP", 10, seed=0)
        assert len(got) == 10
        assert all(e.subset_tags == frozenset({SubsetTag.EXTREME}) for e in got)

    def test_pf_draws_from_rank_one(self):
        got = select_subset(self.pops, "PF", 8, seed=0)
        assert len(got) == 8 and all(e.pareto_rank == 1 for e in got)

    def test_pfr_is_half_front_half_random(self):
        got = select_subset(self.pops, "PFR", 10, seed=0)
        tags = [next(iter(e.subset_tags)) for e in got]
        assert tags.count(SubsetTag.FRONT) == 5 and tags.count(SubsetTag.RANDOM) == 5
        assert len({e.instance.id for e in got}) == 10

    def test_ro_draws_from_archives(self):
        got = select_subset(self.pops, "RO", 30, seed=1)
        ids = {e.instance.id for p in self.pops for e in p.archive}
        assert len(got) == 30 and all(e.instance.id in ids for e in got)

    def test_oversized_request_warns(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            got = select_subset(self.pops, "PF", 1000, seed=0)
        assert len(got) == 15 and any("requested 1000" in str(w.message) for w in caught)

    def test_empty_populations(self):
        empty = EvolverResult([], [], EvolverConfig(), BASE)
        for kind in SubsetKind:
            with pytest.raises(SelectionError):
                select_subset([empty], kind, 5, seed=0)

    def test_deterministic(self):
        a = select_subset(self.pops, "RO", 12, seed=9)
        b = select_subset(self.pops, "RO", 12, seed=9)
        assert [e.instance.id for e in a] == [e.instance.id for e in b]
