import math
from dataclasses import replace

import numpy as np
import pytest

from htcpipe.cluster import (
    GAParams,
    NodeSubset,
    brute_force_subset,
    fitness,
    ga_search,
    read_subset,
    two_stage_cluster,
    write_subset,
)
from htcpipe.domain import HTCField, LoadCase, gen_rect_face
from htcpipe.oracles import exhaustive_fitness_table
from htcpipe.seeding import mix_seed
from htcpipe.surrogate import SurrogateParams, synth_htc

from conftest import make_fields, small_cases

FAST_GA = GAParams(population_size=20, generations=60, rng_seed=7)


class TestNodeSubset:
    def test_sorted_unique_enforced(self):
        with pytest.raises(ValueError):
            NodeSubset(0, (2, 1))
        with pytest.raises(ValueError):
            NodeSubset(0, (1, 1))
        with pytest.raises(ValueError):
            NodeSubset(0, ())

    def test_m_property(self):
        assert NodeSubset(0, (0, 3, 5)).m == 3


class TestGAParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            GAParams(population_size=1)
        with pytest.raises(ValueError):
            GAParams(generations=0)
        with pytest.raises(ValueError):
            GAParams(elitism_count=50, population_size=50)
        with pytest.raises(ValueError):
            GAParams(tournament_size=1)

    def test_round_trip(self):
        p = GAParams(rng_seed=9)
        assert GAParams.from_dict(p.to_dict()) == p


class TestFitness:
    def test_full_set_is_zero(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams(face_phase=1))
        full = NodeSubset(square_face.face_id, tuple(range(square_face.n_nodes)))
        assert fitness(full, square_face, [field]) <= 1e-8

    def test_single_center_constant_field_hand_value(self):
        # 2 nodes a distance d apart, constant value c, subset of one node:
        # the single-center model has eps = 1 and coefficient c, so the error
        # at the other node is c * (1 - exp(-d^2)).
        d, c = 0.8, 4.0
        face = gen_rect_face(0, 1, 2, d, 1.0)
        field = HTCField(0, 0, np.array([c, c]))
        got = fitness(NodeSubset(0, (0,)), face, [field])
        assert got == pytest.approx(c * (1.0 - math.exp(-(d**2))), rel=1e-12)

    def test_matches_exhaustive_enumeration(self, corner_face, base_case):
        field = synth_htc(corner_face, base_case, SurrogateParams(face_phase=5))
        table = exhaustive_fitness_table(corner_face, [field], 2)
        assert len(table) == 6
        for members, expected in table.items():
            got = fitness(NodeSubset(corner_face.face_id, members), corner_face, [field])
            assert got == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_multi_field_takes_worst_case(self, square_face):
        cases = small_cases(3)
        fields = make_fields(square_face, cases, phase=1)
        sub = NodeSubset(square_face.face_id, (0, 4, 8))
        per_case = [fitness(sub, square_face, [f]) for f in fields]
        assert fitness(sub, square_face, fields) == pytest.approx(max(per_case), rel=1e-12)

    def test_face_mismatch_rejected(self, square_face, corner_face, base_case):
        field = synth_htc(corner_face, base_case, SurrogateParams())
        with pytest.raises(ValueError):
            fitness(NodeSubset(square_face.face_id, (0,)), square_face, [field])


class TestGASearch:
    def test_full_set_shortcut(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams())
        best = ga_search(square_face, [field], square_face.n_nodes, FAST_GA)
        assert best.members == tuple(range(square_face.n_nodes))
        assert best.fitness <= 1e-8

    def test_deterministic_given_seed(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams(face_phase=4))
        a = ga_search(square_face, [field], 3, FAST_GA)
        b = ga_search(square_face, [field], 3, FAST_GA)
        assert a == b

    def test_seed_changes_trajectory_not_validity(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams(face_phase=4))
        for seed in range(5):
            best = ga_search(square_face, [field], 3, replace(FAST_GA, rng_seed=seed))
            assert best.m == 3
            assert all(0 <= i < square_face.n_nodes for i in best.members)

    def test_best_so_far_non_increasing(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams(face_phase=9))
        history = []
        ga_search(
            square_face, [field], 3,
            replace(FAST_GA, generations=40),
            on_generation=lambda gen, best: history.append(best),
        )
        assert len(history) == 40
        assert all(b <= a + 1e-15 for a, b in zip(history, history[1:]))

    def test_matches_brute_force_on_small_instances(self):
        hits, total = 0, 0
        rng = np.random.default_rng(12)
        for trial in range(8):
            rows, cols = int(rng.integers(2, 4)), int(rng.integers(2, 5))
            face = gen_rect_face(trial, rows, cols, 1.0, 1.0)
            m = int(rng.integers(2, min(4, face.n_nodes - 1) + 1))
            case = LoadCase(0, float(rng.uniform(10, 40)), float(rng.uniform(1, 9)), 0, 0)
            field = synth_htc(face, case, SurrogateParams(face_phase=trial))
            oracle = brute_force_subset(face, [field], m)
            got = ga_search(face, [field], m,
                            GAParams(population_size=30, generations=200, rng_seed=trial))
            assert got.fitness >= oracle.fitness - 1e-12
            total += 1
            if got.fitness <= oracle.fitness * 1.05:
                hits += 1
        assert hits >= int(0.75 * total)

    def test_invalid_m_rejected(self, corner_face, base_case):
        field = synth_htc(corner_face, base_case, SurrogateParams())
        with pytest.raises(ValueError):
            ga_search(corner_face, [field], 5, FAST_GA)
        with pytest.raises(ValueError):
            ga_search(corner_face, [field], 0, FAST_GA)

    def test_empty_fields_rejected(self, corner_face):
        with pytest.raises(ValueError):
            ga_search(corner_face, [], 2, FAST_GA)

    def test_candidates_restriction(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams())
        pool = [0, 2, 4, 6, 8]
        best = ga_search(square_face, [field], 3, FAST_GA, candidates=pool)
        assert set(best.members) <= set(pool)


class TestBruteForce:
    def test_full_set_single_candidate(self):
        face = gen_rect_face(0, 1, 3, 1.0, 1.0)
        field = HTCField(0, 0, np.array([1.0, 2.0, 3.0]))
        best = brute_force_subset(face, [field], 3)
        assert best.members == (0, 1, 2)

    def test_exactly_representable_node_wins(self):
        # Field manufactured as a single-center model at node 2 (eps = 1, the
        # single-center default): that singleton interpolates exactly.
        face = gen_rect_face(0, 1, 5, 4.0, 1.0)
        target = 2
        r = np.linalg.norm(face.positions - face.positions[target], axis=1)
        field = HTCField(0, 0, 7.0 * np.exp(-(r**2)))
        best = brute_force_subset(face, [field], 1)
        assert best.members == (target,)
        assert best.fitness <= 1e-10

    def test_budget_exceeded(self):
        face = gen_rect_face(0, 6, 6, 1.0, 1.0)
        field = HTCField(0, 0, np.full(36, 2.0))
        with pytest.raises(ValueError, match="budget"):
            brute_force_subset(face, [field], 18)

    def test_ties_take_lexicographically_smallest(self):
        # A constant field on a symmetric face gives symmetric ties.
        face = gen_rect_face(0, 2, 2, 1.0, 1.0)
        field = HTCField(0, 0, np.full(4, 3.0))
        best = brute_force_subset(face, [field], 2)
        table = exhaustive_fitness_table(face, [field], 2)
        optimum = min(table.values())
        tied = sorted(k for k, v in table.items() if v <= optimum * (1 + 1e-12))
        assert best.members == tied[0]


class TestTwoStage:
    def test_single_case_degenerates_to_stage_one(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams(face_phase=3))
        result = two_stage_cluster(square_face, [field], 3, FAST_GA)
        stage1 = ga_search(
            square_face, [field], 3, replace(FAST_GA, rng_seed=mix_seed(FAST_GA.rng_seed, 1))
        )
        assert result.members == stage1.members
        assert result.fitness == pytest.approx(stage1.fitness, rel=1e-12)

    def test_identical_fields_match_single_case(self, square_face, base_case):
        field = synth_htc(square_face, base_case, SurrogateParams(face_phase=3))
        single = two_stage_cluster(square_face, [field], 3, FAST_GA)
        double = two_stage_cluster(square_face, [field, field], 3, FAST_GA)
        assert double.members == single.members
        assert double.fitness == pytest.approx(single.fitness, rel=1e-12)

    def test_final_beats_every_stage_one_subset(self, square_face):
        cases = small_cases(3)
        fields = make_fields(square_face, cases, phase=6)
        params = replace(FAST_GA, rng_seed=21)
        result = two_stage_cluster(square_face, fields, 4, params)
        stage1_params = replace(params, rng_seed=mix_seed(params.rng_seed, 1))
        for f in fields:
            s1 = ga_search(square_face, [f], 4, stage1_params)
            all_case = fitness(s1, square_face, fields)
            assert result.fitness <= all_case + 1e-12

    def test_deterministic(self, square_face):
        cases = small_cases(2)
        fields = make_fields(square_face, cases, phase=2)
        a = two_stage_cluster(square_face, fields, 3, FAST_GA)
        b = two_stage_cluster(square_face, fields, 3, FAST_GA)
        assert a == b

    def test_pool_padding_reaches_m(self, corner_face, base_case):
        # m = N forces stage-1 pools of exactly N; padding is a no-op and the
        # full set comes back.
        field = synth_htc(corner_face, base_case, SurrogateParams())
        result = two_stage_cluster(corner_face, [field], 4, FAST_GA)
        assert result.members == (0, 1, 2, 3)


class TestSubsetDocument:
    def test_round_trip_bytes(self, square_face, base_case, tmp_path):
        field = synth_htc(square_face, base_case, SurrogateParams())
        best = ga_search(square_face, [field], 3, FAST_GA)
        path = tmp_path / "subset.json"
        write_subset(best, FAST_GA, path)
        first = path.read_bytes()
        subset, params = read_subset(path)
        assert subset == best
        assert params == FAST_GA
        write_subset(subset, params, path)
        assert path.read_bytes() == first
