import pytest

from attnring import check_validity, predict_cycles
from attnring.generators import (
    compact,
    gen_algo1,
    gen_algo2,
    gen_algo3,
    generators_for_scheme,
    group_plan,
)
from attnring.model import BadScheme, DISTINCT, MASKED, SHARED, ProblemSpec

TABLE_ALGO1 = {(3, 3): 24, (4, 4): 40, (5, 5): 60, (6, 3): 168,
               (6, 6): 84, (15, 5): 1440, (15, 15): 480, (17, 17): 612}
TABLE_ALGO3 = {(3, 3): 18, (4, 4): 32, (5, 5): 40, (6, 3): 120,
               (6, 6): 60, (15, 5): 810, (15, 15): 270, (17, 17): 340}
TABLE_ALGO2 = {(3, 3): 21, (4, 4): 36, (5, 5): 51, (6, 3): 144,
               (6, 6): 73, (15, 5): 1146, (15, 15): 396}


def spec(n, m, scheme):
    return ProblemSpec(n=n, d=n, m=m, scheme=scheme)


class TestCycleCounts:
    @pytest.mark.parametrize("nm,want", sorted(TABLE_ALGO1.items()))
    def test_algo1(self, nm, want):
        n, m = nm
        assert gen_algo1(spec(n, m, DISTINCT)).num_cycles == want

    @pytest.mark.parametrize("nm,want", sorted(TABLE_ALGO3.items()))
    def test_algo3(self, nm, want):
        n, m = nm
        assert gen_algo3(spec(n, m, MASKED)).num_cycles == want

    @pytest.mark.parametrize("nm,want", sorted(TABLE_ALGO2.items()))
    def test_algo2(self, nm, want):
        n, m = nm
        assert gen_algo2(spec(n, m, SHARED)).num_cycles == want

    def test_algo2_never_worse_than_algo1(self):
        for n, m in TABLE_ALGO2:
            a2 = gen_algo2(spec(n, m, SHARED)).num_cycles
            a1 = predict_cycles(1, n, m)
            assert a2 <= a1, (n, m, a2, a1)


class TestValidity:
    @pytest.mark.parametrize("n,m", [(3, 1), (3, 3), (4, 2), (6, 2),
                                     (6, 3), (8, 4), (10, 5), (12, 6)])
    def test_all_generators_valid(self, n, m):
        for scheme, gen in ((DISTINCT, gen_algo1), (SHARED, gen_algo2),
                            (MASKED, gen_algo3)):
            rep = check_validity(gen(spec(n, m, scheme)))
            assert rep.ok, (n, m, scheme, rep.violations[:3])

    @pytest.mark.parametrize("n,m", [(4, 2), (6, 3), (12, 4)])
    def test_initial_placement_bound(self, n, m):
        bound = 4 * n * n // m
        for scheme, gen in ((DISTINCT, gen_algo1), (SHARED, gen_algo2),
                            (MASKED, gen_algo3)):
            s = gen(spec(n, m, scheme))
            assert all(len(e) <= bound for e in s.initial)


class TestSchemeGuards:
    def test_wrong_scheme_rejected(self):
        with pytest.raises(BadScheme):
            gen_algo1(spec(4, 2, MASKED))
        with pytest.raises(BadScheme):
            gen_algo2(spec(4, 2, DISTINCT))
        with pytest.raises(BadScheme):
            gen_algo3(spec(4, 2, SHARED))

    def test_generators_for_scheme(self):
        assert generators_for_scheme(DISTINCT) == {1: gen_algo1}
        assert generators_for_scheme(SHARED) == {1: gen_algo1, 2: gen_algo2}
        assert generators_for_scheme(MASKED) == {3: gen_algo3}


class TestGroupPlan:
    def test_odd_n_group_count(self):
        plan = group_plan(spec(9, 3, SHARED))
        assert len(plan) == 5  # offsets 0..4
        assert plan[0] == {"offset": 0, "orientation": "self", "hops": 0}

    def test_even_n_has_half_diagonal(self):
        plan = group_plan(spec(6, 3, SHARED))
        assert plan[-1] == {"offset": 3, "orientation": "both", "hops": 0}

    def test_hops_bounded_by_half_ring(self):
        for n, m in [(6, 3), (9, 3), (12, 4), (15, 5)]:
            for g in group_plan(spec(n, m, SHARED)):
                assert 0 <= g["hops"] <= m


class TestCompact:
    def test_compact_preserves_validity_and_result(self):
        s = gen_algo2(spec(6, 3, SHARED), compact_transfers=False)
        c = compact(s)
        assert c.num_cycles <= s.num_cycles
        assert check_validity(c).ok

    def test_compact_idempotent(self):
        s = gen_algo2(spec(6, 3, SHARED))
        assert compact(s).num_cycles == s.num_cycles
