"""Schedule constructions for the ring.

All three generators share a block structure: a block is n consecutive
cycles in which m accumulator "streams" circulate once around the ring per
m cycles, each stream picking up one term per stop.  With k = n/m laps per
block, a stream visits every PE k times and collects all n of its terms.

Stream geometry used throughout (1-based PEs and indices, block i of k,
step j of n, PE l of m):

    stream id at PE l:  ((l - j) mod m) + (i-1)m   (+1, or -1 mod n +1)
    term index at PE l: (l + floor((j-1)/m)m + (i-1)m - 1) mod n + 1

A stream finishes, after its j = n step, on PE ((id-1) mod m) + 1, and the
term index visits each value exactly once per stream.  Phase 2 then walks
row sums along the ring against the stored weights, and phase 3 circulates
the normalized weights against locally accumulated outputs.
"""

from __future__ import annotations

from .model import (
    DISTINCT,
    MASKED,
    SHARED,
    ArchConfig,
    BadScheme,
    NOP,
    PEAction,
    ProblemSpec,
    Schedule,
    elem_roles,
    is_elem,
)


def _arch(spec: ProblemSpec, arch: ArchConfig | None) -> ArchConfig:
    return arch if arch is not None else ArchConfig(m=spec.m)


def _initial_from_consumption(spec, arch, cycles) -> list[frozenset]:
    """Pre-load on every PE exactly the input elements it ever reads."""
    need = [set() for _ in range(arch.m)]
    for cycle in cycles:
        for p, act in enumerate(cycle):
            if act.compute is not None:
                for d in act.compute[2:]:
                    if is_elem(d):
                        need[p].add(d)
    return [frozenset(s) for s in need]


def _finish(spec, arch, cycles) -> Schedule:
    return Schedule(
        spec=spec,
        arch=arch,
        initial=_initial_from_consumption(spec, arch, cycles),
        cycles=cycles,
    )


def _stream(n, m, i, j, l):
    """Stream id in 1..n (no modular wrap: always lands in block i)."""
    return (l - j) % m + (i - 1) * m + 1


def _term(n, m, i, j, l):
    """Term index collected at PE l on step j of block i."""
    return (l + ((j - 1) // m) * m + (i - 1) * m - 1) % n + 1


def _wrapped_stream(n, m, i, j, l):
    """Stream id wrapped mod n (block 1 contains stream n instead of 0)."""
    return ((l - j) % m + (i - 1) * m - 1) % n + 1


# ---------------------------------------------------------------------------
# Dense phases shared by the unmasked generators.
# ---------------------------------------------------------------------------


def _dense_phase1(spec):
    n, m, k = spec.n, spec.m, spec.n // spec.m
    qr, kr, _ = elem_roles(spec.scheme)
    cycles = []
    for h in range(1, n + 1):
        for i in range(1, k + 1):
            for j in range(1, n + 1):
                acts = []
                for l in range(1, m + 1):
                    b = _wrapped_stream(n, m, i, j, l)
                    c = _term(n, m, i, j, l)
                    dst = ("w'", h, b)
                    acts.append(PEAction(
                        compute=("mac", dst, (qr, h, c), (kr, b, c)),
                        transfer=(dst, dst) if j != n else None,
                        phase="1",
                    ))
                cycles.append(acts)
    return cycles


def _dense_phase2(spec):
    n, m, k = spec.n, spec.m, spec.n // spec.m
    cycles = []
    for kind in ("2a", "2b"):
        for i in range(1, k + 1):
            for j in range(1, n + 1):
                acts = []
                for l in range(1, m + 1):
                    a = _stream(n, m, i, j, l)
                    b = _term(n, m, i, j, l)
                    if kind == "2a":
                        comp = ("eac", ("s", a), ("w'", a, b))
                    else:
                        comp = ("div", ("w", a, b), ("e", a, b), ("s", a))
                    acts.append(PEAction(
                        compute=comp,
                        transfer=(("s", a), ("s", a)),
                        phase=kind,
                    ))
                cycles.append(acts)
    return cycles


def _dense_phase3(spec):
    n, m, k = spec.n, spec.m, spec.n // spec.m
    _, _, vr = elem_roles(spec.scheme)
    cycles = []
    for h in range(1, n + 1):
        for i in range(1, k + 1):
            for j in range(1, n + 1):
                acts = []
                for l in range(1, m + 1):
                    b = _stream(n, m, i, j, l)
                    c = _term(n, m, i, j, l)
                    acts.append(PEAction(
                        compute=("mac", ("y", h, c), ("w", h, b), (vr, b, c)),
                        transfer=(("w", h, b), ("w", h, b)),
                        phase="3",
                    ))
                cycles.append(acts)
    return cycles


def gen_algo1(spec: ProblemSpec, arch: ArchConfig | None = None) -> Schedule:
    """Row-at-a-time schedule: every slot computes, 2n^3/m + 2n^2/m cycles."""
    if spec.scheme == MASKED:
        raise BadScheme("the dense schedule computes above the diagonal; "
                        "use gen_algo3 for the masked scheme")
    arch = _arch(spec, arch)
    cycles = _dense_phase1(spec) + _dense_phase2(spec) + _dense_phase3(spec)
    return _finish(spec, arch, cycles)


# ---------------------------------------------------------------------------
# Shared inputs: compute one circular diagonal per group, mirror the rest.
# ---------------------------------------------------------------------------


def group_plan(spec: ProblemSpec) -> list[dict]:
    """Diagonal groups for the shared scheme, with ring-hop costs.

    Each group computes the circular diagonal at offset +h or -h (whichever
    mirror lands nearer along the unidirectional ring) and then forwards
    copies `hops` positions so the mirrored entry sits where phase 2
    expects it.  For even n the half-way diagonal is self-mirrored and is
    computed in full with no hops.
    """
    n, m = spec.n, spec.m
    hmax = (n - 1) // 2 if n % 2 else n // 2 - 1
    plan = []
    for h in range(0, hmax + 1):
        hm = h % m
        if h == 0:
            orient, hops = "self", 0
        elif hm == 0:
            orient, hops = "plus", m
        elif 2 * hm <= m:
            orient, hops = "plus", hm
        else:
            orient, hops = "minus", m - hm
        plan.append({"offset": h, "orientation": orient, "hops": hops})
    if n % 2 == 0:
        plan.append({"offset": n // 2, "orientation": "both", "hops": 0})
    return plan


def gen_algo2(
    spec: ProblemSpec,
    arch: ArchConfig | None = None,
    compact_transfers: bool = True,
) -> Schedule:
    """Shared-input schedule: halves the phase-1 multiplications by
    computing one orientation of each diagonal pair and shipping renamed
    copies to the mirror positions."""
    if spec.scheme != SHARED:
        raise BadScheme("gen_algo2 needs the shared scheme")
    arch = _arch(spec, arch)
    n, m, k = spec.n, spec.m, spec.n // spec.m
    cycles = []
    for group in group_plan(spec):
        h, hops = group["offset"], group["hops"]
        plus = group["orientation"] in ("self", "plus", "both")
        for i in range(1, k + 1):
            rows = {}
            for j in range(1, n + 1):
                acts = []
                for l in range(1, m + 1):
                    b = _wrapped_stream(n, m, i, j, l)
                    a = (b + h - 1) % n + 1 if plus else (b - h - 1) % n + 1
                    rows[b] = a
                    c = _term(n, m, i, j, l)
                    dst = ("w'", a, b)
                    acts.append(PEAction(
                        compute=("mac", dst, ("x", a, c), ("x", b, c)),
                        transfer=(dst, dst) if j != n else None,
                        phase="1",
                    ))
                cycles.append(acts)
            for e in range(1, hops + 1):
                acts = [NOP] * m
                for b, a in rows.items():
                    pe = ((b - 1) % m + e - 1) % m + 1
                    store = ("w'", b, a) if e == hops else ("w'", a, b)
                    acts[pe - 1] = PEAction(
                        transfer=(("w'", a, b), store), phase="1")
                cycles.append(acts)
    cycles += _dense_phase2(spec) + _dense_phase3(spec)
    sched = _finish(spec, arch, cycles)
    return compact(sched) if compact_transfers else sched


# ---------------------------------------------------------------------------
# Masked inputs: pack row pairs (A, n-A) into full-length streams.
# ---------------------------------------------------------------------------


def _flip(beta, h, n):
    """Split stream position beta of pair-group h into a (row, col) entry:
    positions 1..n-h hold row n-h, positions n-h+1..n hold row h."""
    if beta <= n - h:
        return (n - h, beta)
    return (h, beta - (n - h))


def gen_algo3(spec: ProblemSpec, arch: ArchConfig | None = None) -> Schedule:
    """Masked schedule: skips everything above the diagonal by pairing
    short rows, n^2(n+1)/m + 2n^2/m cycles for odd n (n+2 for even)."""
    if spec.scheme != MASKED:
        raise BadScheme("gen_algo3 needs the masked scheme")
    arch = _arch(spec, arch)
    n, m, k = spec.n, spec.m, spec.n // spec.m
    hmax = (n - 1) // 2 if n % 2 else n // 2 - 1
    cycles = []

    def stream_phase(make_action, label, gated_rows, wrap):
        """Phases 1 and 3 share their geometry; only the action differs.

        Phase 1 deposits each stream where it ends, so it uses the wrapped
        stream id (end PE ((beta-1) mod m)+1, where phase 2 looks); phase 3
        picks streams up where phase 2 left them, which is where unwrapped
        streams start."""
        stream_id = _wrapped_stream if wrap else _stream
        out = []
        for h in range(0, hmax + 1):
            for i in range(1, k + 1):
                for j in range(1, n + 1):
                    acts = []
                    for l in range(1, m + 1):
                        beta = stream_id(n, m, i, j, l)
                        a, b = _flip(beta, h, n)
                        c = _term(n, m, i, j, l)
                        acts.append(make_action(a, b, c, j))
                    out.append(acts)
        if gated_rows:
            a = n // 2
            for i in range(1, k + 1):
                for j in range(1, n + 1):
                    acts = []
                    for l in range(1, m + 1):
                        beta = stream_id(n, m, i, j, l)
                        c = _term(n, m, i, j, l)
                        if beta <= n // 2:
                            acts.append(make_action(a, beta, c, j))
                        else:
                            acts.append(PEAction(phase=label))
                    out.append(acts)
        return out

    def p1_action(a, b, c, j):
        dst = ("w'", a, b)
        return PEAction(
            compute=("mac", dst, ("q", a, c), ("k", b, c)),
            transfer=(dst, dst) if j != n else None,
            phase="1",
        )

    def p3_action(a, b, c, j):
        return PEAction(
            compute=("mac", ("y", a, c), ("w", a, b), ("v", b, c)),
            transfer=(("w", a, b), ("w", a, b)) if j != n else None,
            phase="3",
        )

    cycles += stream_phase(p1_action, "1", gated_rows=(n % 2 == 0), wrap=True)

    for kind in ("2a", "2b"):
        created = set()
        for i in range(1, k + 1):
            for j in range(1, n + 1):
                acts = []
                for l in range(1, m + 1):
                    a = _stream(n, m, i, j, l)
                    braw = _term(n, m, i, j, l)
                    if a <= hmax:
                        # short rows were packed at the tail of their
                        # stream, so their columns sit shifted by n - a
                        b = braw - (n - a)
                        ok = b >= 1
                    else:
                        b = braw
                        ok = b <= a
                    comp = None
                    if ok:
                        if kind == "2a":
                            comp = ("eac", ("s", a), ("w'", a, b))
                        else:
                            comp = ("div", ("w", a, b), ("e", a, b), ("s", a))
                        created.add(a)
                    keep_moving = kind == "2b" or a in created
                    acts.append(PEAction(
                        compute=comp,
                        transfer=(("s", a), ("s", a)) if keep_moving else None,
                        phase=kind,
                    ))
                cycles.append(acts)

    cycles += stream_phase(p3_action, "3", gated_rows=(n % 2 == 0), wrap=False)
    return _finish(spec, arch, cycles)


def generators_for_scheme(scheme: str):
    """Which generators apply to a scheme, keyed by algorithm number."""
    if scheme == DISTINCT:
        return {1: gen_algo1}
    if scheme == SHARED:
        return {1: gen_algo1, 2: gen_algo2}
    return {3: gen_algo3}


# ---------------------------------------------------------------------------
# Transfer compaction.
# ---------------------------------------------------------------------------


def _first_move(s: Schedule) -> bool:
    """Move one transfer out of a compute-free cycle to the earliest safe
    slot; returns True if a move or a cycle deletion happened."""
    m = s.arch.m
    cycles = s.cycles
    T = len(cycles)
    writes: dict[tuple[int, tuple], list[int]] = {}  # (pe, datum) -> cycles
    reads: dict[tuple[int, tuple], list[int]] = {}

    def note(table, p, d, t):
        table.setdefault((p, d), []).append(t)

    for p, items in enumerate(s.initial, start=1):
        for d in items:
            note(writes, p, d, 0)
    for t in range(1, T + 1):
        for p in range(1, m + 1):
            act = cycles[t - 1][p - 1]
            if act.compute is not None:
                note(writes, p, act.compute[1], t)
                if act.compute[0] == "eac":
                    src = act.compute[2]
                    note(writes, p, ("e", src[1], src[2]), t)
                for d in act.compute[2:]:
                    note(reads, p, d, t)
            if act.transfer is not None:
                datum, store_as = act.transfer
                note(reads, p, datum, t)
                note(writes, s.arch.succ(p), store_as, t + 1)

    def state_version(p, d, t):
        return sum(1 for w in writes.get((p, d), ()) if w <= t)

    for t in range(1, T + 1):
        cyc = cycles[t - 1]
        if any(a.compute is not None for a in cyc):
            continue
        if all(a.transfer is None for a in cyc):
            del cycles[t - 1]
            return True
        for p in range(1, m + 1):
            act = cyc[p - 1]
            if act.transfer is None:
                continue
            datum, store_as = act.transfer
            q = s.arch.succ(p)
            ver = state_version(p, datum, t)
            if ver == 0:
                continue  # broken schedule; leave it for the simulator
            for c2 in range(1, t):
                if cycles[c2 - 1][p - 1].transfer is not None:
                    continue
                if state_version(p, datum, c2) != ver:
                    continue
                if any(c2 + 1 <= r <= t for r in reads.get((q, store_as), ())):
                    continue
                # Arriving earlier must not race another write of the same
                # datum at the receiver; our own original arrival at t+1 is
                # the one write we may discount.
                qwrites = writes.get((q, store_as), ())
                if any(c2 + 1 <= w <= t for w in qwrites):
                    continue
                if sum(1 for w in qwrites if w == t + 1) > 1:
                    continue
                cycles[c2 - 1][p - 1] = PEAction(
                    compute=cycles[c2 - 1][p - 1].compute,
                    transfer=act.transfer,
                    phase=cycles[c2 - 1][p - 1].phase or act.phase,
                )
                cyc[p - 1] = PEAction(compute=None, transfer=None, phase=act.phase)
                if all(a.compute is None and a.transfer is None for a in cyc):
                    del cycles[t - 1]
                return True
    return False


def compact(s: Schedule) -> Schedule:
    """Pull transfers out of otherwise idle cycles and drop empty cycles.

    Only cycles with no compute anywhere are touched, so dense schedules
    come back unchanged; the result is a fixpoint (compacting twice is a
    no-op)."""
    out = Schedule(
        spec=s.spec,
        arch=s.arch,
        initial=list(s.initial),
        cycles=[list(c) for c in s.cycles],
    )
    while _first_move(out):
        pass
    return out
