import itertools

import pytest

from cyclotest.dsl import extract_predicates, parse_model
from cyclotest.reduction import (
    OverlappingParts,
    coverable_cases,
    derive_projections,
    enlarge_states,
    enumerate_reachable_flag_states,
    enumerate_test_cases,
    generalized_state,
    make_piecemeal,
    project_to_state,
    rewrite_to_predicates,
)

FLAG_IDS = ("move_eq_f_t1", "position_eq_f_t1", "move_eq_f_t2", "position_eq_t_t2")


def _env(bits):
    return dict(zip(FLAG_IDS, bits))


class TestTestCases:
    def test_iron_four_cases(self, iron_ast):
        cases = enumerate_test_cases(iron_ast)
        assert [str(pc) for pc in cases] == [
            "position && held(!move && position, 900s)",
            "position && !held(!move && position, 900s)",
            "!position && held(!move && !position, 60s)",
            "!position && !held(!move && !position, 60s)",
        ]
        assert [pc.id for pc in cases] == ["case1", "case2", "case3", "case4"]
        assert [pc.leaf_id for pc in cases] == ["tt", "te", "et", "ee"]

    def test_single_decision_model_two_cases(self):
        ast = parse_model(
            "model m { input a: bool; output o: bool; "
            "logic { if (a) { o = 1; } else { o = 0; } } }"
        )
        assert [str(pc) for pc in enumerate_test_cases(ast)] == ["a", "!a"]

    def test_rewritten_conditions(self, iron_ast, iron_extraction):
        rewritten = [rewrite_to_predicates(pc, iron_extraction)
                     for pc in enumerate_test_cases(iron_ast)]
        assert [str(pc) for pc in rewritten] == [
            "position && move_eq_f_t2 && position_eq_t_t2",
            "position && !(move_eq_f_t2 && position_eq_t_t2)",
            "!position && move_eq_f_t1 && position_eq_f_t1",
            "!position && !(move_eq_f_t1 && position_eq_f_t1)",
        ]

    def test_condition_without_temporal_atoms_unchanged(self, iron_extraction):
        ast = parse_model(
            "model m { input a: bool; output o: bool; "
            "logic { if (a) { o = 1; } else { o = 0; } } }"
        )
        ex = extract_predicates(ast)
        pc = enumerate_test_cases(ast)[0]
        assert str(rewrite_to_predicates(pc, ex)) == str(pc)


class TestProjections:
    def test_iron_projections(self, iron_extraction):
        projections = derive_projections(iron_extraction)
        assert [str(p) for p in projections] == [
            "move_eq_f_t2 && position_eq_t_t2",
            "!(move_eq_f_t2 && position_eq_t_t2)",
            "move_eq_f_t1 && position_eq_f_t1",
            "!(move_eq_f_t1 && position_eq_f_t1)",
        ]
        assert [p.id for p in projections] == ["P1", "P2", "P3", "P4"]

    def test_input_only_condition_projects_to_true(self):
        ast = parse_model(
            "model m { input a: bool; output o: bool; "
            "logic { if (a) { o = 1; } else { o = 0; } } }"
        )
        ex = extract_predicates(ast)
        pc = rewrite_to_predicates(enumerate_test_cases(ast)[0], ex)
        projection = project_to_state(pc, ex.model)
        assert str(projection) == "true"
        assert projection.evaluate({}) is True

    def test_dropping_input_factors_matches_existential_semantics(self, iron_extraction):
        from cyclotest.dsl import eval_expr

        projections = derive_projections(iron_extraction)
        for bits in itertools.product((0, 1), repeat=4):
            env = _env(bits)
            for p in projections:
                kept = all(
                    bool(eval_expr(f.expr, env, env)) == f.value for f in p.state_factors
                )
                assert p.evaluate(env) == kept

    def test_projection_soundness(self, iron_extraction):
        # every state in a projection admits inputs covering the source case
        cases = [rewrite_to_predicates(pc, iron_extraction)
                 for pc in enumerate_test_cases(iron_extraction.source)]
        projections = derive_projections(iron_extraction)
        for bits in itertools.product((0, 1), repeat=4):
            env = _env(bits)
            for p, pc in zip(projections, cases):
                if p.evaluate(env):
                    assert pc.id in coverable_cases(env, [pc], iron_extraction.model)


class TestGeneralizedState:
    def test_all_flags_false(self, iron_extraction):
        projections = derive_projections(iron_extraction)
        assert generalized_state(_env((0, 0, 0, 0)), projections) == (0, 1, 0, 1)

    def test_long_vertical_rest(self, iron_extraction):
        projections = derive_projections(iron_extraction)
        assert generalized_state(_env((1, 0, 1, 1)), projections) == (1, 0, 0, 1)

    def test_empty_projection_list(self, iron_extraction):
        assert generalized_state(_env((0, 0, 0, 0)), []) == ()


class TestReachability:
    def test_iron_counts(self, desk_extraction):
        report = enumerate_reachable_flag_states(desk_extraction, 1000)
        assert report.upper_bound == 16
        assert report.reachable_count == 9

    def test_reachable_vectors_are_the_consistent_ones(self, desk_extraction):
        # m-pair in {00,10,11} (long hold implies short), p-pair in {00,10,01}
        # (the two position literals cannot both have held)
        report = enumerate_reachable_flag_states(desk_extraction, 1000)
        expected = {
            (m1, p1, m2, p2)
            for (m1, m2) in ((0, 0), (1, 0), (1, 1))
            for (p1, p2) in ((0, 0), (1, 0), (0, 1))
        }
        assert set(report.vectors) == expected

    def test_witnesses_replay_to_their_vectors(self, desk_extraction):
        from cyclotest.temporal import compute_time_flags, initial_states, step_all

        report = enumerate_reachable_flag_states(desk_extraction, 1000)
        for vector in report.vectors:
            states = initial_states(desk_extraction.predicates)
            t = 0
            for inputs in report.witnesses[vector]:
                t += 1000
                states = step_all(states, inputs, t)
            flags = compute_time_flags(states, t)
            assert tuple(int(flags[p]) for p in report.predicate_ids) == vector

    def test_single_predicate_two_states(self):
        ast = parse_model(
            "model m { input a: bool; output o: bool; "
            "logic { if (held(a, 2s)) { o = 1; } else { o = 0; } } }"
        )
        report = enumerate_reachable_flag_states(extract_predicates(ast), 1000)
        assert report.upper_bound == 2
        assert report.reachable_count == 2

    def test_zero_predicates_upper_bound_one(self):
        ast = parse_model(
            "model m { input a: bool; output o: bool; "
            "logic { if (a) { o = 1; } else { o = 0; } } }"
        )
        report = enumerate_reachable_flag_states(extract_predicates(ast), 1000)
        assert report.upper_bound == 1
        assert report.vectors == ((),)


class TestEnlargement:
    def _coverable(self, desk_extraction):
        cases = [rewrite_to_predicates(pc, desk_extraction)
                 for pc in enumerate_test_cases(desk_extraction.source)]

        def fn(bits):
            return coverable_cases(_env(bits), cases, desk_extraction.model)

        return fn

    def test_identity_partition_merges_to_three_cells(self, desk_extraction):
        report = enumerate_reachable_flag_states(desk_extraction, 1000)
        identity = [[vec] for vec in sorted(report.vectors)]
        merged = enlarge_states(identity, self._coverable(desk_extraction))
        assert len(merged) == 3
        assert sorted(len(cell) for cell in merged) == [1, 2, 6]

    def test_already_coarsest_partition_unchanged(self, desk_extraction, desk_projections):
        report = enumerate_reachable_flag_states(desk_extraction, 1000)
        cells = {}
        for vec in sorted(report.vectors):
            cells.setdefault(generalized_state(_env(vec), desk_projections), []).append(vec)
        partition = [tuple(v) for _, v in sorted(cells.items())]
        merged = enlarge_states(partition, self._coverable(desk_extraction))
        assert [set(c) for c in merged] == [set(c) for c in partition]

    def test_single_cell_unchanged(self, desk_extraction):
        report = enumerate_reachable_flag_states(desk_extraction, 1000)
        partition = [tuple(sorted(report.vectors))]
        merged = enlarge_states(partition, self._coverable(desk_extraction))
        assert len(merged) == 1
        assert set(merged[0]) == set(report.vectors)

    def test_never_merges_different_coverable_sets(self, desk_extraction):
        report = enumerate_reachable_flag_states(desk_extraction, 1000)
        coverable = self._coverable(desk_extraction)
        merged = enlarge_states([[v] for v in sorted(report.vectors)], coverable)
        for cell in merged:
            signatures = {coverable(state) for state in cell}
            assert len(signatures) == 1


class TestPiecemeal:
    def test_iron_split_by_position(self, iron_ast):
        parts = make_piecemeal(iron_ast, ["t", "e"])
        by_id = {p.node_id: p for p in parts}
        assert by_id["t"].pinned == {"position": 1}
        assert by_id["t"].iterated == {"move": (0, 1)}
        assert by_id["t"].case_ids == ("case1", "case2")
        assert by_id["e"].pinned == {"position": 0}
        assert by_id["e"].case_ids == ("case3", "case4")

    def test_whole_model_single_part(self, iron_ast):
        part = make_piecemeal(iron_ast, [""])[0]
        assert part.pinned == {}
        assert set(part.iterated) == {"move", "position"}
        assert part.case_ids == ("case1", "case2", "case3", "case4")

    def test_overlapping_parts_rejected(self, iron_ast):
        with pytest.raises(OverlappingParts):
            make_piecemeal(iron_ast, ["t", "tt"])

    def test_unknown_part_rejected(self, iron_ast):
        with pytest.raises(Exception, match="unknown node id"):
            make_piecemeal(iron_ast, ["x"])

    def test_mcc_target_warns(self, iron_ast):
        with pytest.warns(UserWarning, match="not decomposable"):
            make_piecemeal(iron_ast, ["t", "e"], target_criterion="mcc")

    def test_temporal_prefix_reported_as_establish_goal(self, iron_ast):
        part = make_piecemeal(iron_ast, ["tt"])[0]
        assert part.pinned == {"position": 1}
        assert part.establish == ("held(!move && position, 900s)",)
