"""Problem instances, machine model, schedule representation and on-disk formats.

Data identities are plain tuples so the simulator and encoder can hash and
compare them cheaply:

    ("q"|"k"|"v"|"x", i, l)   input vector element, 1-based
    ("w'", i, j)              raw (pre-softmax) weight
    ("e", i, j)               exponent of a raw weight, kept for the division
    ("s", i)                  softmax denominator (row sum of exponents)
    ("w", i, j)               normalized weight
    ("y", i, l)               output vector element
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

DISTINCT = "distinct"
SHARED = "shared"
MASKED = "masked"
SCHEMES = (DISTINCT, SHARED, MASKED)

ELEM_ROLES = ("q", "k", "v", "x")
_ACC_KINDS = ("w'", "s", "y")  # accumulators: carry a term set
_ATOM_KINDS = ("e", "w")  # single-shot values

DataId = tuple


class ModelError(Exception):
    """Base class for everything raised by this package."""


class DimensionMismatch(ModelError):
    pass


class Indivisible(ModelError):
    pass


class BadScheme(ModelError):
    pass


class ParseError(ModelError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownDataId(ParseError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    n: int
    d: int
    m: int
    scheme: str


@dataclass(frozen=True)
class ArchConfig:
    m: int
    register_capacity: int | None = None

    def succ(self, p: int) -> int:
        """Ring successor of PE p (1-based)."""
        return p % self.m + 1


def validate_spec(n: int, d: int, m: int, scheme: str) -> ProblemSpec:
    if scheme not in SCHEMES:
        raise BadScheme(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if d != n:
        raise DimensionMismatch(f"d must equal n (got n={n}, d={d})")
    if n < 2:
        raise DimensionMismatch(f"n must be at least 2 (got {n})")
    if m < 1 or n % m != 0:
        raise Indivisible(f"m must divide n (got n={n}, m={m})")
    return ProblemSpec(n=n, d=d, m=m, scheme=scheme)


def elem_roles(scheme: str) -> tuple[str, str, str]:
    """(query-side, key-side, value-side) element roles for a scheme."""
    if scheme == SHARED:
        return ("x", "x", "x")
    return ("q", "k", "v")


def is_elem(d: DataId) -> bool:
    return d[0] in ELEM_ROLES


def is_accumulator(d: DataId) -> bool:
    return d[0] in _ACC_KINDS


def format_dataid(d: DataId) -> str:
    kind = d[0]
    if kind in ELEM_ROLES or kind in ("w'", "e", "w", "y"):
        return f"{kind}[{d[1]}][{d[2]}]"
    if kind == "s":
        return f"s[{d[1]}]"
    raise UnknownDataId(f"cannot format {d!r}")


_DATAID_RE = re.compile(r"^(q|k|v|x|w'|e|w|y|s)\[(\d+)\](?:\[(\d+)\])?$")


def parse_dataid(token: str, spec: ProblemSpec | None = None) -> DataId:
    m = _DATAID_RE.match(token)
    if not m:
        raise UnknownDataId(f"unrecognized data token {token!r}")
    kind, a, b = m.group(1), int(m.group(2)), m.group(3)
    if kind == "s":
        if b is not None:
            raise UnknownDataId(f"row sum takes one index: {token!r}")
        d: DataId = ("s", a)
    else:
        if b is None:
            raise UnknownDataId(f"{token!r} needs two indices")
        d = (kind, a, int(b))
    if spec is not None:
        check_dataid(d, spec)
    return d


def check_dataid(d: DataId, spec: ProblemSpec) -> None:
    """Raise UnknownDataId if `d` is out of range or wrong for the scheme."""
    kind = d[0]
    n = spec.n
    idx = d[1:]
    if any(not (1 <= v <= n) for v in idx):
        raise UnknownDataId(f"index out of range in {format_dataid(d)} (1-based, n={n})")
    if kind in ELEM_ROLES:
        if spec.scheme == SHARED and kind != "x":
            raise UnknownDataId(f"{format_dataid(d)}: shared scheme uses role x only")
        if spec.scheme != SHARED and kind == "x":
            raise UnknownDataId(f"{format_dataid(d)}: role x is reserved for the shared scheme")
    if spec.scheme == MASKED and kind in ("e", "w") and d[2] > d[1]:
        raise UnknownDataId(f"{format_dataid(d)}: masked entries have no {kind} value")


@dataclass(frozen=True)
class PEAction:
    """One PE, one cycle: at most one compute plus one outbound transfer.

    compute: None | ("mac", dst, a, b) | ("eac", dst, src) | ("div", dst, num, den)
    transfer: None | (datum, store_as); store_as differs from datum only for
        the symmetric rename w'[i][j] -> w'[j][i] under the shared scheme.
    phase: optional reporting label ("1", "2a", "2b", "3").
    """

    compute: tuple | None = None
    transfer: tuple | None = None
    phase: str | None = None


NOP = PEAction()


@dataclass
class Schedule:
    spec: ProblemSpec
    arch: ArchConfig
    initial: list[frozenset]  # per PE, DataIds resident at cycle 1
    cycles: list[list[PEAction]] = field(default_factory=list)

    def __eq__(self, other):
        return (
            isinstance(other, Schedule)
            and self.spec == other.spec
            and self.arch == other.arch
            and [set(s) for s in self.initial] == [set(s) for s in other.initial]
            and self.cycles == other.cycles
        )

    @property
    def num_cycles(self) -> int:
        return len(self.cycles)


def validate_schedule(s: Schedule) -> None:
    """Structural invariants; raises on the first problem found."""
    if s.arch.m != s.spec.m:
        raise DimensionMismatch(f"arch has {s.arch.m} PEs, spec wants {s.spec.m}")
    if len(s.initial) != s.arch.m:
        raise DimensionMismatch("initial placement must list every PE")
    for p, items in enumerate(s.initial, start=1):
        for d in items:
            if not is_elem(d):
                raise UnknownDataId(
                    f"initial placement on PE {p} holds {format_dataid(d)}; "
                    "only input elements may be pre-loaded"
                )
            check_dataid(d, s.spec)
    for t, cycle in enumerate(s.cycles, start=1):
        if len(cycle) != s.arch.m:
            raise DimensionMismatch(f"cycle {t} has {len(cycle)} PE slots, expected {s.arch.m}")
        for act in cycle:
            if act.compute is not None:
                for d in act.compute[1:]:
                    check_dataid(d, s.spec)
            if act.transfer is not None:
                datum, store_as = act.transfer
                check_dataid(datum, s.spec)
                check_dataid(store_as, s.spec)


# ---------------------------------------------------------------------------
# Serialization: one JSON document shared by every tool in the repo.
# ---------------------------------------------------------------------------

_COMPUTE_FIELDS = {"mac": ("a", "b"), "eac": ("src",), "div": ("num", "den")}


def _compute_to_json(c: tuple | None):
    if c is None:
        return None
    kind = c[0]
    out = {"kind": kind, "dst": format_dataid(c[1])}
    for name, d in zip(_COMPUTE_FIELDS[kind], c[2:]):
        out[name] = format_dataid(d)
    return out


def _action_to_json(a: PEAction):
    out = {"compute": _compute_to_json(a.compute), "transfer": None, "phase": a.phase}
    if a.transfer is not None:
        datum, store_as = a.transfer
        out["transfer"] = {"datum": format_dataid(datum), "store_as": format_dataid(store_as)}
    return out


def serialize_schedule(s: Schedule) -> str:
    doc = {
        "spec": {"n": s.spec.n, "d": s.spec.d, "m": s.spec.m, "scheme": s.spec.scheme},
        "arch": {"m": s.arch.m, "register_capacity": s.arch.register_capacity},
        "initial": [sorted(format_dataid(d) for d in items) for items in s.initial],
        "cycles": [[_action_to_json(a) for a in cycle] for cycle in s.cycles],
    }
    return json.dumps(doc, indent=1)


def _compute_from_json(c, spec):
    if c is None:
        return None
    try:
        kind = c["kind"]
        fields = _COMPUTE_FIELDS[kind]
        parts = [kind, parse_dataid(c["dst"], spec)]
        parts.extend(parse_dataid(c[name], spec) for name in fields)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed compute record {c!r}: {exc}") from exc
    return tuple(parts)


def parse_schedule(text: str) -> Schedule:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    try:
        sp = doc["spec"]
        spec = validate_spec(sp["n"], sp["d"], sp["m"], sp["scheme"])
        ar = doc["arch"]
        arch = ArchConfig(m=ar["m"], register_capacity=ar.get("register_capacity"))
        initial = [frozenset(parse_dataid(tok, spec) for tok in items) for items in doc["initial"]]
        cycles = []
        for cyc in doc["cycles"]:
            actions = []
            for rec in cyc:
                transfer = None
                if rec.get("transfer") is not None:
                    tr = rec["transfer"]
                    transfer = (parse_dataid(tr["datum"], spec), parse_dataid(tr["store_as"], spec))
                actions.append(
                    PEAction(
                        compute=_compute_from_json(rec.get("compute"), spec),
                        transfer=transfer,
                        phase=rec.get("phase"),
                    )
                )
            cycles.append(actions)
    except ParseError:
        raise
    except ModelError as exc:
        raise ParseError(str(exc)) from exc
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing or malformed field: {exc}") from exc
    s = Schedule(spec=spec, arch=arch, initial=initial, cycles=cycles)
    validate_schedule(s)
    return s
