"""Cycle-accurate executor for ring schedules.

Timing model (one cycle, per PE):
  1. arrivals sent on the previous cycle are committed (overwriting any
     existing copy of the same datum),
  2. the compute unit fires, reading operands from the committed state and
     updating its destination in place,
  3. the transfer unit samples the post-compute state, so a value produced
     in a cycle can leave the PE in that same cycle.

Transfers are copies: the sender keeps its copy.  Accumulators are tracked
as per-PE term sets so that partially built copies on different PEs stay
distinguishable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    MASKED,
    SHARED,
    ArchConfig,
    ModelError,
    ProblemSpec,
    Schedule,
    format_dataid,
)
from .oracle import reference_attention

OPERAND_MISSING = "OperandMissing"
TRANSFER_SOURCE_MISSING = "TransferSourceMissing"
RENAME_UNJUSTIFIED = "RenameUnjustified"
DUPLICATE_TERM = "DuplicateTerm"
MISSING_TERM = "MissingTerm"
FOREIGN_TERM = "ForeignTerm"
CAPACITY_EXCEEDED = "CapacityExceeded"
MASKED_VALUE_COMPUTED = "MaskedValueComputed"

REL_TOLERANCE = 1e-9
REL_FLOOR = 1e-15


@dataclass(frozen=True)
class Violation:
    kind: str
    cycle: int  # 1-based; 0 means "end of schedule"
    pe: int  # 0 means "no particular PE"
    detail: str
    severity: str = "error"


@dataclass
class ExecutionReport:
    spec: ProblemSpec
    arch: ArchConfig
    cycles: int
    violations: list[Violation]
    op_counts: dict[str, int]
    utilization: dict[str, float]
    memory_high_water: int
    memory_high_water_per_pe: list[int] = field(default_factory=list)
    transfer_count: int = 0
    numeric: bool = False
    max_rel_err: float = 0.0

    @property
    def provenance_ok(self) -> bool:
        return not any(v.severity == "error" for v in self.violations)

    @property
    def numeric_ok(self) -> bool:
        return not self.numeric or self.max_rel_err <= REL_TOLERANCE

    @property
    def ok(self) -> bool:
        return self.provenance_ok and self.numeric_ok

    def metrics(self) -> dict:
        out = {
            "n": self.spec.n,
            "d": self.spec.d,
            "m": self.arch.m,
            "scheme": self.spec.scheme,
            "cycles": self.cycles,
            "ok": self.ok,
            "provenance_ok": self.provenance_ok,
            "violations": len(self.violations),
            "mem_hw_max": self.memory_high_water,
            "transfers": self.transfer_count,
        }
        for kind in ("mac", "eac", "div"):
            out[f"{kind}s"] = self.op_counts.get(kind, 0)
        for phase, util in sorted(self.utilization.items()):
            out[f"util_p{phase}"] = round(util, 6)
        if self.numeric:
            out["max_rel_err"] = self.max_rel_err
        return out


@dataclass
class _Copy:
    terms: set = field(default_factory=set)
    value: float = 0.0
    plain: bool = False  # elems, e's and w's have no term set


def required_columns(spec: ProblemSpec, i: int) -> range:
    """Columns j that row i genuinely needs (the mask drops j > i)."""
    return range(1, i + 1) if spec.scheme == MASKED else range(1, spec.n + 1)


def required_terms(spec: ProblemSpec, datum) -> frozenset:
    role = datum[0]
    if role == "w'":
        return frozenset(range(1, spec.d + 1))
    if role == "s":
        return frozenset(required_columns(spec, datum[1]))
    if role == "y":
        return frozenset(required_columns(spec, datum[1]))
    raise ModelError(f"{format_dataid(datum)} is not an accumulator")


def required_data(spec: ProblemSpec):
    """All data that must exist, complete, somewhere at the end."""
    for i in range(1, spec.n + 1):
        for j in required_columns(spec, i):
            yield ("w'", i, j)
        yield ("s", i)
        for l in range(1, spec.d + 1):
            yield ("y", i, l)


class _PE:
    __slots__ = ("copies",)

    def __init__(self):
        self.copies: dict[tuple, _Copy] = {}

    def get(self, datum):
        return self.copies.get(datum)


def _elem_value(inputs, datum):
    q, k, v = inputs
    role, i, l = datum
    arr = {"q": q, "k": k, "v": v, "x": q}[role]
    return arr[i - 1][l - 1]


def execute(
    schedule: Schedule,
    inputs=None,
    strict_masked: bool = False,
) -> ExecutionReport:
    """Run a schedule; numeric checking is enabled when inputs are given.

    ``inputs`` is a (q, k, v) triple of n-by-d arrays (pass the same array
    three times, or use oracle.random_inputs, for the shared scheme).  A
    trailing axis batches independent input sets: n-by-d-by-s arrays run s
    seeds in one pass, and max_rel_err covers all of them.
    """
    spec, arch = schedule.spec, schedule.arch
    m = arch.m
    numeric = inputs is not None
    if numeric:
        inputs = tuple(np.asarray(a, dtype=np.float64) for a in inputs)
    pes = [_PE() for _ in range(m)]
    violations: list[Violation] = []
    op_counts: dict[str, int] = {}
    phase_busy: dict[str, int] = {}
    phase_slots: dict[str, int] = {}
    # (pe, datum) -> [first write cycle, last read cycle]
    liveness: dict[tuple[int, tuple], list[int]] = {}

    def bad(kind, cycle, pe, detail, severity="error"):
        violations.append(Violation(kind, cycle, pe, detail, severity))

    def wrote(p, datum, t):
        # Writing creates the register slot; only uses (operand reads,
        # transfer sources, accumulator continuations) keep it occupied.
        liveness.setdefault((p, datum), [t, t])

    def read(p, datum, t):
        seg = liveness.get((p, datum))
        if seg is not None:
            seg[1] = max(seg[1], t)

    for p, elems in enumerate(schedule.initial, start=1):
        for datum in elems:
            val = _elem_value(inputs, datum) if numeric else 0.0
            pes[p - 1].copies[datum] = _Copy(value=val, plain=True)
            wrote(p, datum, 0)

    def present(p, datum):
        return datum in pes[p - 1].copies

    def complete(p, datum):
        c = pes[p - 1].get(datum)
        if c is None:
            return False
        return c.plain or c.terms >= required_terms(spec, datum)

    def need(p, datum, t):
        """Operand presence check; returns the copy or None (after flagging)."""
        c = pes[p - 1].get(datum)
        if c is None:
            bad(OPERAND_MISSING, t, p, f"operand {format_dataid(datum)} not resident")
            return None
        read(p, datum, t)
        return c

    def accumulate(p, dst, term, contribution, t):
        c = pes[p - 1].copies.get(dst)
        if c is None:
            c = pes[p - 1].copies[dst] = _Copy()
        if term in c.terms:
            bad(DUPLICATE_TERM, t, p, f"{format_dataid(dst)} already holds term {term}")
            return
        c.terms.add(term)
        c.value += contribution
        wrote(p, dst, t)
        read(p, dst, t)  # read-modify-write: the running copy is a use

    def do_compute(p, compute, t):
        kind, dst = compute[0], compute[1]
        op_counts[kind] = op_counts.get(kind, 0) + 1
        if kind == "mac" and dst[0] == "w'":
            _, i, j = dst
            a, b = compute[2], compute[3]
            row = "x" if spec.scheme == SHARED else "q"
            col = "x" if spec.scheme == SHARED else "k"
            if not (
                a[0] == row and b[0] == col and a[1] == i and b[1] == j and a[2] == b[2]
            ):
                bad(FOREIGN_TERM, t, p,
                    f"mac operands {format_dataid(a)},{format_dataid(b)} do not "
                    f"form a term of {format_dataid(dst)}")
                return
            ca, cb = need(p, a, t), need(p, b, t)
            if ca is None or cb is None:
                return
            if spec.scheme == MASKED and j > i:
                bad(MASKED_VALUE_COMPUTED, t, p,
                    f"{format_dataid(dst)} lies above the diagonal",
                    severity="error" if strict_masked else "warning")
            accumulate(p, dst, a[2], ca.value * cb.value, t)
        elif kind == "mac" and dst[0] == "y":
            _, i, l = dst
            a, b = compute[2], compute[3]
            vrole = "x" if spec.scheme == SHARED else "v"
            if not (a[0] == "w" and a[1] == i and b[0] == vrole and b[2] == l
                    and a[2] == b[1]):
                bad(FOREIGN_TERM, t, p,
                    f"mac operands {format_dataid(a)},{format_dataid(b)} do not "
                    f"form a term of {format_dataid(dst)}")
                return
            j = a[2]
            if j not in required_terms(spec, dst):
                bad(FOREIGN_TERM, t, p,
                    f"term {j} is outside the rows needed by {format_dataid(dst)}")
                return
            ca, cb = need(p, a, t), need(p, b, t)
            if ca is None or cb is None:
                return
            accumulate(p, dst, j, ca.value * cb.value, t)
        elif kind == "eac":
            src = compute[2]
            if dst[0] != "s" or src[0] != "w'" or src[1] != dst[1]:
                bad(FOREIGN_TERM, t, p,
                    f"eac of {format_dataid(src)} does not feed {format_dataid(dst)}")
                return
            i, j = src[1], src[2]
            if j not in required_terms(spec, dst):
                bad(FOREIGN_TERM, t, p,
                    f"term {j} is outside the rows needed by {format_dataid(dst)}")
                return
            c = need(p, src, t)
            if c is None:
                return
            if not complete(p, src):
                bad(OPERAND_MISSING, t, p,
                    f"operand {format_dataid(src)} is incomplete "
                    f"(has terms {sorted(c.terms)})")
                return
            ev = np.exp(c.value) if numeric else 0.0
            pes[p - 1].copies[("e", i, j)] = _Copy(value=ev, plain=True)
            wrote(p, ("e", i, j), t)
            accumulate(p, dst, j, ev, t)
        elif kind == "div":
            num, den = compute[2], compute[3]
            if not (dst[0] == "w" and num[0] == "e" and den[0] == "s"
                    and num[1] == dst[1] and num[2] == dst[2] and den[1] == dst[1]):
                bad(FOREIGN_TERM, t, p,
                    f"div operands {format_dataid(num)},{format_dataid(den)} do not "
                    f"produce {format_dataid(dst)}")
                return
            cn, cd = need(p, num, t), need(p, den, t)
            if cn is None or cd is None:
                return
            if not complete(p, den):
                bad(OPERAND_MISSING, t, p,
                    f"operand {format_dataid(den)} is incomplete "
                    f"(has terms {sorted(cd.terms)})")
                return
            val = cn.value / cd.value if numeric else 0.0
            pes[p - 1].copies[dst] = _Copy(value=val, plain=True)
            wrote(p, dst, t)
        else:
            bad(FOREIGN_TERM, t, p, f"unrecognised compute {compute!r}")

    T = schedule.num_cycles
    pending: list[tuple[int, tuple, _Copy]] = []  # (dest pe, datum, copy)
    transfer_count = 0
    for t in range(1, T + 1):
        for p, datum, copy in pending:
            pes[p - 1].copies[datum] = copy
            wrote(p, datum, t)
        pending = []
        actions = schedule.cycles[t - 1]
        phase = next((a.phase for a in actions if a.phase is not None), None)
        key = phase if phase is not None else "?"
        phase_slots[key] = phase_slots.get(key, 0) + m
        for p in range(1, m + 1):
            act = actions[p - 1]
            if act.compute is not None:
                phase_busy[key] = phase_busy.get(key, 0) + 1
                do_compute(p, act.compute, t)
        for p in range(1, m + 1):
            act = actions[p - 1]
            if act.transfer is None:
                continue
            transfer_count += 1
            datum, store_as = act.transfer
            src = pes[p - 1].get(datum)
            if src is None:
                bad(TRANSFER_SOURCE_MISSING, t, p,
                    f"{format_dataid(datum)} not resident to send")
                continue
            read(p, datum, t)
            if store_as != datum:
                mirror_ok = (
                    spec.scheme == SHARED
                    and datum[0] == "w'" and store_as[0] == "w'"
                    and store_as[1] == datum[2] and store_as[2] == datum[1]
                )
                if not (mirror_ok and complete(p, datum)):
                    bad(RENAME_UNJUSTIFIED, t, p,
                        f"{format_dataid(datum)} cannot be stored as "
                        f"{format_dataid(store_as)}")
                    continue
                out = _Copy(terms=set(required_terms(spec, store_as)), value=src.value)
            elif src.plain:
                out = _Copy(value=src.value, plain=True)
            else:
                out = _Copy(terms=set(src.terms), value=src.value)
            pending.append((arch.succ(p), store_as, out))

    # Completeness of everything the computation owes.
    complete_anywhere = {}
    for datum in required_data(spec):
        holders = [p for p in range(1, m + 1) if complete(p, datum)]
        if holders:
            complete_anywhere[datum] = holders
        else:
            bad(MISSING_TERM, 0, 0,
                f"{format_dataid(datum)} is complete on no PE at the end")
    # Register high-water: sweep the liveness segments, per PE.
    per_pe = [0] * m
    events_by_pe: dict[int, list[tuple[int, int]]] = {}
    for (p, datum), (w0, r1) in liveness.items():
        events_by_pe.setdefault(p, []).append((w0, 1))
        events_by_pe[p].append((r1 + 1, -1))
    for p, events in events_by_pe.items():
        events.sort()
        live = peak = 0
        for _, delta in events:
            live += delta
            peak = max(peak, live)
        per_pe[p - 1] = peak
        if arch.register_capacity is not None and peak > arch.register_capacity:
            bad(CAPACITY_EXCEEDED, 0, p,
                f"needs {peak} registers, capacity is {arch.register_capacity}")
    high = max(per_pe, default=0)

    max_rel_err = 0.0
    if numeric:
        ref = reference_attention(spec, *inputs)

        def ref_value(datum):
            role = datum[0]
            if role == "w'":
                return ref.rawW[datum[1] - 1][datum[2] - 1]
            if role == "s":
                return ref.expSums[datum[1] - 1]
            return ref.outputs[datum[1] - 1][datum[2] - 1]

        for datum, holders in complete_anywhere.items():
            want = ref_value(datum)
            for p in holders:
                got = pes[p - 1].copies[datum].value
                err = np.abs(got - want) / np.maximum(np.abs(want), REL_FLOOR)
                max_rel_err = max(max_rel_err, float(np.max(err)))

    utilization = {
        phase: phase_busy.get(phase, 0) / slots
        for phase, slots in phase_slots.items()
    }
    return ExecutionReport(
        spec=spec,
        arch=arch,
        cycles=T,
        violations=violations,
        op_counts=op_counts,
        transfer_count=transfer_count,
        utilization=utilization,
        memory_high_water=high,
        memory_high_water_per_pe=per_pe,
        numeric=numeric,
        max_rel_err=max_rel_err,
    )


def check_validity(schedule: Schedule, strict_masked: bool = False) -> ExecutionReport:
    """Symbolic run only: provenance, completeness and occupancy checks."""
    return execute(schedule, inputs=None, strict_masked=strict_masked)


def memory_high_water(schedule: Schedule) -> list[int]:
    """Per-PE maximum number of simultaneously resident data items under
    liveness-based eviction (a datum holds a register from its first write
    on a PE until its last use there)."""
    return execute(schedule).memory_high_water_per_pe
