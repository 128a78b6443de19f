import pytest

from attnring import (
    ArchConfig,
    PEAction,
    ProblemSpec,
    parse_schedule,
    serialize_schedule,
    validate_schedule,
    validate_spec,
)
from attnring.generators import gen_algo1, gen_algo2, gen_algo3
from attnring.model import (
    DISTINCT,
    MASKED,
    SHARED,
    DimensionMismatch,
    Indivisible,
    BadScheme,
    ParseError,
    UnknownDataId,
    check_dataid,
    format_dataid,
    parse_dataid,
)


class TestValidateSpec:
    def test_accepts_valid(self):
        s = validate_spec(6, 6, 3, SHARED)
        assert (s.n, s.d, s.m, s.scheme) == (6, 6, 3, SHARED)

    def test_rejects_bad_scheme(self):
        with pytest.raises(BadScheme):
            validate_spec(4, 4, 2, "banana")

    def test_rejects_d_ne_n(self):
        with pytest.raises(DimensionMismatch):
            validate_spec(4, 5, 2, DISTINCT)

    def test_rejects_indivisible(self):
        with pytest.raises(Indivisible):
            validate_spec(5, 5, 2, DISTINCT)
        with pytest.raises(Indivisible):
            validate_spec(4, 4, 0, DISTINCT)

    def test_rejects_tiny(self):
        with pytest.raises(DimensionMismatch):
            validate_spec(1, 1, 1, DISTINCT)


class TestDataIds:
    def test_format_parse_roundtrip(self):
        for d in [("q", 1, 2), ("w'", 3, 1), ("s", 2), ("y", 2, 2), ("x", 4, 4)]:
            assert parse_dataid(format_dataid(d)) == d

    def test_parse_rejects_garbage(self):
        for token in ["z[1][2]", "s[1][2]", "q[1]", "w'", "q[a][b]"]:
            with pytest.raises(UnknownDataId):
                parse_dataid(token)

    def test_scheme_checks(self):
        shared = ProblemSpec(n=4, d=4, m=2, scheme=SHARED)
        distinct = ProblemSpec(n=4, d=4, m=2, scheme=DISTINCT)
        with pytest.raises(UnknownDataId):
            check_dataid(("q", 1, 1), shared)
        with pytest.raises(UnknownDataId):
            check_dataid(("x", 1, 1), distinct)

    def test_range_check(self):
        spec = ProblemSpec(n=4, d=4, m=2, scheme=DISTINCT)
        with pytest.raises(UnknownDataId):
            check_dataid(("q", 5, 1), spec)
        with pytest.raises(UnknownDataId):
            check_dataid(("q", 0, 1), spec)

    def test_masked_upper_triangle_rejected(self):
        spec = ProblemSpec(n=4, d=4, m=2, scheme=MASKED)
        with pytest.raises(UnknownDataId):
            check_dataid(("e", 2, 3), spec)
        check_dataid(("e", 3, 2), spec)  # lower triangle is fine
        check_dataid(("w'", 2, 3), spec)  # raw weights exist everywhere


class TestScheduleStructure:
    def test_validate_rejects_wrong_width(self):
        spec = ProblemSpec(n=4, d=4, m=2, scheme=DISTINCT)
        s = gen_algo1(spec)
        s.cycles[3] = s.cycles[3][:1]
        with pytest.raises(DimensionMismatch):
            validate_schedule(s)

    def test_validate_rejects_non_elem_initial(self):
        spec = ProblemSpec(n=4, d=4, m=2, scheme=DISTINCT)
        s = gen_algo1(spec)
        s.initial[0] = frozenset(s.initial[0] | {("w'", 1, 1)})
        with pytest.raises(UnknownDataId):
            validate_schedule(s)

    def test_num_cycles(self):
        spec = ProblemSpec(n=3, d=3, m=3, scheme=DISTINCT)
        assert gen_algo1(spec).num_cycles == 24


class TestSerialization:
    @pytest.mark.parametrize(
        "scheme,gen",
        [(DISTINCT, gen_algo1), (SHARED, gen_algo2), (MASKED, gen_algo3)],
    )
    def test_roundtrip(self, scheme, gen):
        spec = ProblemSpec(n=4, d=4, m=2, scheme=scheme)
        s = gen(spec)
        assert parse_schedule(serialize_schedule(s)) == s

    def test_parse_rejects_bad_json(self):
        with pytest.raises(ParseError):
            parse_schedule("{not json")

    def test_parse_rejects_missing_fields(self):
        with pytest.raises(ParseError):
            parse_schedule("{}")

    def test_parse_checks_dataids(self):
        spec = ProblemSpec(n=4, d=4, m=2, scheme=DISTINCT)
        text = serialize_schedule(gen_algo1(spec))
        with pytest.raises(ParseError):
            parse_schedule(text.replace('"q[1][1]"', '"q[9][1]"'))


def test_peaction_is_hashable_and_frozen():
    a = PEAction(compute=("mac", ("w'", 1, 1), ("q", 1, 1), ("k", 1, 1)))
    assert hash(a) == hash(PEAction(compute=a.compute))
    with pytest.raises(Exception):
        a.phase = "1"


def test_arch_ring_successor():
    arch = ArchConfig(m=3)
    assert [arch.succ(p) for p in (1, 2, 3)] == [2, 3, 1]
