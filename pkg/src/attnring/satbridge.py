"""CNF encoding of the scheduling problem for an external SAT solver.

Decision variables (everything else is a defined gate):

    ep|e|p        input element e pre-loaded on PE p (placement is free)
    c|...|t|p     one variable per legal compute instance per slot
    trans|d|t|p   send d (keeping a copy) to the ring successor
    transr|d|t|p  send d = w'[i][j] storing it as w'[j][i] (shared scheme)

State is expressed functionally: per datum, cycle and PE, a Tseitin gate
gives the exact term subset held, following the machine timing (arrivals
sent at t-1 overwrite at t, then the cycle-t compute extends the copy, and
a transfer at t samples the post-compute state).  The CNF is satisfiable
exactly when a valid schedule of at most T cycles exists, and any model
decodes to a schedule the simulator accepts.

On top of the functional state sits a retention layer: a free Keep
variable per datum, cycle and PE says whether the PE still holds its copy
at the end of the cycle.  Retention must be continuous from an arrival or
a production, every read (operand, accumulator continuation, transfer
source) needs a retained copy, and the transfer relations are enforced in
both directions: holding the same value on a PE in cycle t and on its ring
successor in cycle t+1 is only possible if it was transferred in cycle t.
Dropping a copy therefore frees the pair constraint, but keeping data
parked on adjacent PEs costs a transfer slot every cycle.

The machine runs the kernel's three stages (weight matrix, softmax,
weighted sum) as globally synchronized phases: a stage begins only after
the previous one has drained on every PE.  Two monotone per-cycle stage
flags gate which compute kinds a cycle may issue; transfers are free in
every phase.

The instance also carries provably redundant clauses (each required term
must be computed somewhere; no k-term copy can exist before its earliest
feasible cycle) that speed up unsatisfiability proofs.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import tempfile
import time
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations

from .model import (
    SHARED,
    ArchConfig,
    ModelError,
    ParseError,
    PEAction,
    ProblemSpec,
    Schedule,
    elem_roles,
    format_dataid,
    parse_dataid,
    validate_spec,
)
from .simulator import required_columns, required_data, required_terms

MAX_N = 6


class TooLarge(ModelError):
    pass


class ScheduleOutOfBounds(ModelError):
    pass


class ModelInconsistent(ModelError):
    pass


class SolverError(ModelError):
    pass


class BudgetExhausted(ModelError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class CnfInstance:
    spec: ProblemSpec
    arch: ArchConfig
    T: int
    num_vars: int
    clauses: list[list[int]]
    varmap: dict[str, int]

    def with_units(self, units: list[int]) -> "CnfInstance":
        return CnfInstance(
            spec=self.spec,
            arch=self.arch,
            T=self.T,
            num_vars=self.num_vars,
            clauses=self.clauses + [[u] for u in units],
            varmap=self.varmap,
        )


class _Builder:
    """Clause sink with structural gate caching (true/False are the Python
    booleans; everything else is a DIMACS literal)."""

    def __init__(self):
        self.num_vars = 0
        self.clauses: list[list[int]] = []
        self.varmap: dict[str, int] = {}
        self._cache: dict = {}

    def var(self, desc: str) -> int:
        self.num_vars += 1
        self.varmap[desc] = self.num_vars
        return self.num_vars

    def aux(self) -> int:
        self.num_vars += 1
        return self.num_vars

    def add(self, clause) -> None:
        """Add a clause of literals/constants, simplifying constants away."""
        out = []
        for l in clause:
            if l is True:
                return
            if l is False:
                continue
            out.append(l)
        self.clauses.append(out)

    def lor(self, lits):
        flat = []
        for l in lits:
            if l is True:
                return True
            if l is False:
                continue
            flat.append(l)
        flat = list(dict.fromkeys(flat))
        if not flat:
            return False
        if len(flat) == 1:
            return flat[0]
        key = ("or", frozenset(flat))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        v = self.aux()
        self.clauses.append([-v] + flat)
        for l in flat:
            self.clauses.append([v, -l])
        self._cache[key] = v
        return v

    def land(self, lits):
        return _neg(self.lor([_neg(l) for l in lits]))

    def amo(self, lits) -> None:
        """Sequential at-most-one over plain literals."""
        if len(lits) <= 1:
            return
        prev = None
        for x in lits[:-1]:
            s = self.aux()
            self.clauses.append([-x, s])
            if prev is not None:
                self.clauses.append([-prev, s])
                self.clauses.append([-prev, -x])
            prev = s
        self.clauses.append([-prev, -lits[-1]])

    def atmost(self, lits, k: int) -> None:
        """Sequential at-most-k counter over literals/constants."""
        k -= sum(1 for l in lits if l is True)
        lits = [l for l in lits if l is not True and l is not False]
        if k < 0:
            self.clauses.append([])
            return
        if len(lits) <= k:
            return
        if k == 0:
            for l in lits:
                self.add([_neg(l)])
            return
        # prev[j] = at least j+1 true among the literals seen so far
        prev = [lits[0]] + [False] * (k - 1)
        for x in lits[1:]:
            self.add([_neg(x), _neg(prev[k - 1])])
            cur = [self.lor([prev[0], x])]
            for j in range(1, k):
                cur.append(self.lor([prev[j], self.land([x, prev[j - 1]])]))
            prev = cur


def _neg(l):
    if l is True:
        return False
    if l is False:
        return True
    return -l


def _subsets(terms):
    items = sorted(terms)
    for k in range(1, len(items) + 1):
        for combo in combinations(items, k):
            yield frozenset(combo)


class _Encoder:
    def __init__(self, spec: ProblemSpec, arch: ArchConfig, T: int):
        if spec.n > MAX_N:
            raise TooLarge(f"n={spec.n} exceeds the desk-scale bound {MAX_N}")
        self.spec, self.arch, self.T = spec, arch, T
        self.n, self.d, self.m = spec.n, spec.d, arch.m
        self.qr, self.kr, self.vr = elem_roles(spec.scheme)
        self.shared = spec.scheme == SHARED
        self.b = _Builder()
        self.pairs = [
            (i, j)
            for i in range(1, self.n + 1)
            for j in required_columns(spec, i)
        ]
        self.accs = (
            [("w'", i, j) for i, j in self.pairs]
            + [("s", i) for i in range(1, self.n + 1)]
            + [("y", i, l) for i in range(1, self.n + 1) for l in range(1, self.d + 1)]
        )
        self.atoms = [("e", i, j) for i, j in self.pairs] + [
            ("w", i, j) for i, j in self.pairs
        ]
        self.elems = [
            (role, i, l)
            for role in sorted(set((self.qr, self.kr, self.vr)))
            for i in range(1, self.n + 1)
            for l in range(1, self.d + 1)
        ]
        self.terms = {d: required_terms(spec, d) for d in self.accs}

        # state literals, keyed (datum, S, t, p) / (datum, t, p)
        self.A: dict = {}
        self.P: dict = {}
        self.base_full: dict = {}
        self.pbase: dict = {}
        self.anyA: dict = {}
        self.preany: dict = {}  # (datum, t, p) -> copy held before compute
        self.keep: dict = {}  # (datum, t, p) -> retained at end of cycle t
        self.avail: dict = {}  # (datum, t, p) -> retained copy readable in cycle t
        self.p2: dict = {}  # (datum, t, p) -> retained copy present in cycle t

        self._make_decisions()
        for t in range(1, T + 1):
            self._cycle_state(t)
            self._cycle_constraints(t)
        self._transfer_relations()
        self._phases()
        self._goal()
        self._cuts()
        if arch.register_capacity is not None:
            self._capacity()

    def _pred(self, p):
        return p - 1 if p > 1 else self.m

    # -- decision variables --------------------------------------------

    def _make_decisions(self):
        b, T, m = self.b, self.T, self.m
        self.ep = {
            (e, p): b.var(f"ep|{format_dataid(e)}|p{p}")
            for e in self.elems
            for p in range(1, m + 1)
        }
        # Input elements arrive pre-distributed by the preceding
        # matrix-vector stage: element (role, i, l) lives on PE
        # ((l-1) mod m)+1 and the distribution is never reordered, so any
        # other placement is forbidden.
        for e in self.elems:
            home = (e[2] - 1) % m + 1
            for p in range(1, m + 1):
                if p != home:
                    b.add([-self.ep[(e, p)]])
        self.cv: dict = {}  # key -> var
        self.cslot: dict = {}  # (t, p) -> [(var, compute-tuple, acc-dst, term)]
        self.tv: dict = {}
        self.rv: dict = {}
        self.tslot: dict = {}
        for t in range(1, T + 1):
            for p in range(1, m + 1):
                slot = []
                for i, j in self.pairs:
                    raw = ("w'", i, j)
                    for l in range(1, self.d + 1):
                        v = b.var(f"c|raw|{format_dataid(raw)}|l{l}|t{t}|p{p}")
                        comp = ("mac", raw, (self.qr, i, l), (self.kr, j, l))
                        slot.append((v, comp, raw, l))
                for i, j in self.pairs:
                    v = b.var(f"c|eac|{format_dataid(('s', i))}|j{j}|t{t}|p{p}")
                    slot.append((v, ("eac", ("s", i), ("w'", i, j)), ("s", i), j))
                for i, j in self.pairs:
                    v = b.var(f"c|div|{format_dataid(('w', i, j))}|t{t}|p{p}")
                    comp = ("div", ("w", i, j), ("e", i, j), ("s", i))
                    slot.append((v, comp, None, None))
                for i in range(1, self.n + 1):
                    for l in range(1, self.d + 1):
                        for j in required_columns(self.spec, i):
                            v = b.var(f"c|out|{format_dataid(('y', i, l))}|j{j}|t{t}|p{p}")
                            comp = ("mac", ("y", i, l), ("w", i, j), (self.vr, j, l))
                            slot.append((v, comp, ("y", i, l), j))
                for v, comp, dst, term in slot:
                    self.cv[(comp, t, p)] = v
                self.cslot[(t, p)] = slot
                tlist = []
                for d in self.accs + self.atoms:
                    v = b.var(f"trans|{format_dataid(d)}|t{t}|p{p}")
                    self.tv[(d, t, p)] = v
                    tlist.append(v)
                if self.shared:
                    for i, j in self.pairs:
                        if i != j:
                            raw = ("w'", i, j)
                            v = b.var(f"transr|{format_dataid(raw)}|t{t}|p{p}")
                            self.rv[(raw, t, p)] = v
                            tlist.append(v)
                self.tslot[(t, p)] = tlist

    def _cterm(self, d, tau, t, p):
        """Compute variable adding term tau to accumulator d, if legal."""
        if d[0] == "w'":
            comp = ("mac", d, (self.qr, d[1], tau), (self.kr, d[2], tau))
        elif d[0] == "s":
            comp = ("eac", d, ("w'", d[1], tau))
        else:
            comp = ("mac", d, ("w", d[1], tau), (self.vr, tau, d[2]))
        return self.cv.get((comp, t, p), False)

    # -- state gates ----------------------------------------------------

    def _cycle_state(self, t):
        b, m = self.b, self.m
        for p in range(1, m + 1):
            pred = self._pred(p)
            for d in self.accs:
                full = self.terms[d]
                tr_in = self.tv[(d, t - 1, pred)] if t > 1 else False
                mirror_in = False
                if self.shared and d[0] == "w'" and d[1] != d[2]:
                    mirror_in = (
                        self.rv[(("w'", d[2], d[1]), t - 1, pred)] if t > 1 else False
                    )
                arr_any = b.lor([tr_in, mirror_in])
                prev = lambda S, pe: self.A.get((d, S, t - 1, pe), False)
                any_prev = b.lor(
                    [prev(S, p) for S in _subsets(full)]
                ) if t > 1 else False
                base = {}
                for S in _subsets(full):
                    arr = b.lor([
                        b.land([tr_in, prev(S, pred)]),
                        mirror_in if S == full else False,
                    ])
                    base[S] = b.lor([arr, b.land([_neg(arr_any), prev(S, p)])])
                nbase = b.land([_neg(arr_any), _neg(any_prev)])
                cany = b.lor([self._cterm(d, tau, t, p) for tau in full])
                for S in _subsets(full):
                    branches = [b.land([base[S], _neg(cany)])]
                    for tau in S:
                        rest = S - {tau}
                        before = base[rest] if rest else nbase
                        branches.append(b.land([before, self._cterm(d, tau, t, p)]))
                    self.A[(d, S, t, p)] = b.lor(branches)
                # a term may not be added to a copy already holding it
                for tau in full:
                    c = self._cterm(d, tau, t, p)
                    if c is False:
                        continue
                    for S in _subsets(full):
                        if tau in S:
                            b.add([-c, _neg(base[S])])
                self.base_full[(d, t, p)] = base[full]
                self.anyA[(d, t, p)] = b.lor(
                    [self.A[(d, S, t, p)] for S in _subsets(full)]
                )
                self.preany[(d, t, p)] = b.lor([arr_any, any_prev])
                self._retention(d, t, p, arr_any, cany)
            for d in self.atoms:
                tr_in = self.tv[(d, t - 1, pred)] if t > 1 else False
                prevp = self.P.get((d, t - 1, p), False)
                pbase = b.lor([prevp, tr_in])
                if d[0] == "e":
                    prod = self.cv.get(
                        (("eac", ("s", d[1]), ("w'", d[1], d[2])), t, p), False
                    )
                else:
                    prod = self.cv.get(
                        (("div", d, ("e", d[1], d[2]), ("s", d[1])), t, p), False
                    )
                self.pbase[(d, t, p)] = pbase
                self.P[(d, t, p)] = b.lor([pbase, prod])
                self._retention(d, t, p, tr_in, prod)

    def _retention(self, d, t, p, arr, prod):
        """Keep/avail/P2 triple: a copy is readable in cycle t (avail) if
        it arrived this cycle or was deliberately kept through t-1; it is
        present in cycle t (P2) if additionally it was produced this cycle;
        keeping it through t in turn requires that presence."""
        b = self.b
        kept = self.keep.get((d, t - 1, p), False)
        avail = b.lor([kept, arr])
        p2 = b.lor([avail, prod])
        if p2 is False:
            keep = False
        else:
            keep = b.aux()
            b.add([-keep, p2])
        self.avail[(d, t, p)] = avail
        self.p2[(d, t, p)] = p2
        self.keep[(d, t, p)] = keep

    # -- per-cycle constraints -------------------------------------------

    def _cycle_constraints(self, t):
        b = self.b
        for p in range(1, self.m + 1):
            for v, comp, dst_acc, _ in self.cslot[(t, p)]:
                kind, dst = comp[0], comp[1]
                if kind == "mac" and dst[0] == "w'":
                    b.add([-v, self.ep[(comp[2], p)]])
                    b.add([-v, self.ep[(comp[3], p)]])
                elif kind == "eac":
                    b.add([-v, self.base_full[(comp[2], t, p)]])
                    b.add([-v, self.avail[(comp[2], t, p)]])
                elif kind == "div":
                    b.add([-v, self.pbase[(comp[2], t, p)]])
                    b.add([-v, self.avail[(comp[2], t, p)]])
                    b.add([-v, self.base_full[(comp[3], t, p)]])
                    b.add([-v, self.avail[(comp[3], t, p)]])
                else:  # mac into y
                    b.add([-v, self.pbase[(comp[2], t, p)]])
                    b.add([-v, self.avail[(comp[2], t, p)]])
                    b.add([-v, self.ep[(comp[3], p)]])
                if dst_acc is not None:
                    # continuing an accumulator copy requires having kept it
                    b.add([
                        -v,
                        _neg(self.preany[(dst_acc, t, p)]),
                        self.avail[(dst_acc, t, p)],
                    ])
            for d in self.accs:
                b.add([-self.tv[(d, t, p)], self.anyA[(d, t, p)]])
                b.add([-self.tv[(d, t, p)], self.p2[(d, t, p)]])
            for d in self.atoms:
                b.add([-self.tv[(d, t, p)], self.P[(d, t, p)]])
                b.add([-self.tv[(d, t, p)], self.p2[(d, t, p)]])
            if self.shared:
                for i, j in self.pairs:
                    if i != j:
                        v = self.rv[(("w'", i, j), t, p)]
                        b.add([-v, self.A[(("w'", i, j), self.terms[("w'", i, j)], t, p)]])
                        b.add([-v, self.p2[(("w'", i, j), t, p)]])
            b.amo([v for v, *_ in self.cslot[(t, p)]])
            b.amo(self.tslot[(t, p)])

    # -- goal and strengthening ------------------------------------------

    def _phases(self):
        """The three stages of the kernel (weight matrix, softmax,
        weighted sum) run as globally synchronized phases: every PE works
        on the same stage, and a stage only starts once the previous one
        has fully drained.  Two monotone stage flags per cycle gate the
        compute kinds accordingly (transfers are free in every phase)."""
        b = self.b
        g2 = {t: b.var(f"ph2|t{t}") for t in range(1, self.T + 1)}
        g3 = {t: b.var(f"ph3|t{t}") for t in range(1, self.T + 1)}
        for t in range(1, self.T + 1):
            b.add([-g3[t], g2[t]])
            if t > 1:
                b.add([-g2[t - 1], g2[t]])
                b.add([-g3[t - 1], g3[t]])
            for p in range(1, self.m + 1):
                for v, comp, _, _ in self.cslot[(t, p)]:
                    kind, dst = comp[0], comp[1]
                    if kind == "mac" and dst[0] == "w'":
                        b.add([-v, -g2[t]])
                    elif kind in ("eac", "div"):
                        b.add([-v, g2[t]])
                        b.add([-v, -g3[t]])
                    else:  # mac into y
                        b.add([-v, g3[t]])

    def _events(self):
        """Read/write events per (datum, cycle, pe), mirroring the
        simulator's liveness bookkeeping: computes write their destination
        (eac also materialises the exponent atom), operands and transfer
        sources are reads, and a transfer writes the receiving PE one cycle
        later."""
        rd: dict = defaultdict(list)
        wr: dict = defaultdict(list)
        for t in range(1, self.T + 1):
            for p in range(1, self.m + 1):
                succ = p % self.m + 1
                for v, comp, _, _ in self.cslot[(t, p)]:
                    kind, dst = comp[0], comp[1]
                    wr[(dst, t, p)].append(v)
                    if dst[0] in ("w'", "s", "y"):
                        # read-modify-write of the running accumulator
                        rd[(dst, t, p)].append(v)
                    rd[(comp[2], t, p)].append(v)
                    if kind == "eac":
                        wr[(("e", dst[1], comp[2][2]), t, p)].append(v)
                    else:
                        rd[(comp[3], t, p)].append(v)
                for d in self.accs + self.atoms:
                    v = self.tv[(d, t, p)]
                    rd[(d, t, p)].append(v)
                    if t < self.T:
                        wr[(d, t + 1, succ)].append(v)
                if self.shared:
                    for i, j in self.pairs:
                        if i != j:
                            v = self.rv[(("w'", i, j), t, p)]
                            rd[(("w'", i, j), t, p)].append(v)
                            if t < self.T:
                                wr[(("w'", j, i), t + 1, succ)].append(v)
        return rd, wr

    def _capacity(self):
        """Per-PE register bound under liveness-based eviction: a datum
        occupies a register from its first write on the PE until its last
        use there.  The count of simultaneously live items may never
        exceed the capacity."""
        cap = self.arch.register_capacity
        b = self.b
        rd, wr = self._events()
        accset = set(self.accs)
        for p in range(1, self.m + 1):
            elems_home = [e for e in self.elems if (e[2] - 1) % self.m + 1 == p]
            # used-at-or-after, swept backward from the horizon
            tail = dict.fromkeys(self.accs + self.atoms, False)
            etail = dict.fromkeys(elems_home, False)
            b.atmost([self.ep[(e, p)] for e in elems_home], cap)
            for t in range(self.T, 0, -1):
                occupied = []
                for d in self.accs + self.atoms:
                    tail[d] = b.lor(rd[(d, t, p)] + [tail[d]])
                    written = (self.anyA if d in accset else self.P)[(d, t, p)]
                    occupied.append(b.land(
                        [written, b.lor([tail[d]] + wr[(d, t, p)])]))
                for e in elems_home:
                    etail[e] = b.lor(rd[(e, t, p)] + [etail[e]])
                    occupied.append(b.land([self.ep[(e, p)], etail[e]]))
                b.atmost(occupied, cap)

    def _transfer_relations(self):
        """Holding the same value on PE p in cycle t and on succ(p) in
        cycle t+1 is only possible if it was transferred in cycle t."""
        b = self.b
        for t in range(1, self.T):
            for p in range(1, self.m + 1):
                succ = p % self.m + 1
                for d in self.atoms + self.accs:
                    b.add([
                        self.tv[(d, t, p)],
                        _neg(self.p2[(d, t, p)]),
                        _neg(self.p2[(d, t + 1, succ)]),
                    ])

    def _goal(self):
        for d in required_data(self.spec):
            self.b.add([
                self.b.land([
                    self.A[(d, self.terms[d], self.T, p)],
                    self.p2[(d, self.T, p)],
                ])
                for p in range(1, self.m + 1)
            ])

    def _alo(self, lits):
        self.b.add(list(lits))

    def _cuts(self):
        T, m, d0 = self.T, self.m, self.d
        slots = [(t, p) for t in range(1, T + 1) for p in range(1, m + 1)]
        done = set()
        for i, j in self.pairs:
            for l in range(1, d0 + 1):
                if self.shared:
                    key = (frozenset((i, j)), l)
                    if key in done:
                        continue
                    done.add(key)
                    lits = [self._cterm(("w'", i, j), l, t, p) for t, p in slots]
                    if i != j:
                        lits += [self._cterm(("w'", j, i), l, t, p) for t, p in slots]
                    self._alo(lits)
                else:
                    self._alo([self._cterm(("w'", i, j), l, t, p) for t, p in slots])
            self._alo([self._cterm(("s", i), j, t, p) for t, p in slots])
            self._alo([
                self.cv[(("div", ("w", i, j), ("e", i, j), ("s", i)), t, p)]
                for t, p in slots
            ])
        for i in range(1, self.n + 1):
            for l in range(1, d0 + 1):
                for j in required_columns(self.spec, i):
                    self._alo([self._cterm(("y", i, l), j, t, p) for t, p in slots])
        # Rigidity: every compute family (one per required term) must fire
        # at least once, and families are disjoint, so a schedule needs at
        # least `minimum` compute slots.  When the deadline offers exactly
        # that many, no slot may idle and no family may fire twice.
        families = []
        done2 = set()
        for i, j in self.pairs:
            for l in range(1, d0 + 1):
                if self.shared:
                    key = (frozenset((i, j)), l)
                    if key in done2:
                        continue
                    done2.add(key)
                    fam = [self._cterm(("w'", i, j), l, t, p) for t, p in slots]
                    if i != j:
                        fam += [self._cterm(("w'", j, i), l, t, p) for t, p in slots]
                else:
                    fam = [self._cterm(("w'", i, j), l, t, p) for t, p in slots]
                families.append(fam)
            families.append([self._cterm(("s", i), j, t, p) for t, p in slots])
            families.append([
                self.cv[(("div", ("w", i, j), ("e", i, j), ("s", i)), t, p)]
                for t, p in slots
            ])
        for i in range(1, self.n + 1):
            for l in range(1, d0 + 1):
                for j in required_columns(self.spec, i):
                    families.append(
                        [self._cterm(("y", i, l), j, t, p) for t, p in slots])
        if len(families) == m * T:
            for t, p in slots:
                self.b.add([v for v, *_ in self.cslot[(t, p)]])
            for fam in families:
                self.b.amo([v for v in fam if v is not False])
        # earliest-feasible-cycle bounds (one compute per cycle along any
        # copy's lineage, and the softmax chain forces serial latencies)
        for d in self.accs:
            nj = len(required_columns(self.spec, d[1]))
            for S in _subsets(self.terms[d]):
                if d[0] == "w'":
                    earliest = len(S)
                elif d[0] == "s":
                    earliest = d0 + len(S)
                else:
                    earliest = d0 + nj + 1 + len(S)
                for t in range(1, min(earliest, T + 1)):
                    for p in range(1, m + 1):
                        lit = self.A[(d, S, t, p)]
                        if lit is not False:
                            self.b.add([_neg(lit)])
        for i, j in self.pairs:
            nj = len(required_columns(self.spec, i))
            for t in range(1, min(d0 + 1, T + 1)):
                for p in range(1, m + 1):
                    lit = self.P[(("e", i, j), t, p)]
                    if lit is not False:
                        self.b.add([_neg(lit)])
            for t in range(1, min(d0 + nj + 1, T + 1)):
                for p in range(1, m + 1):
                    lit = self.P[(("w", i, j), t, p)]
                    if lit is not False:
                        self.b.add([_neg(lit)])

    def instance(self) -> CnfInstance:
        return CnfInstance(
            spec=self.spec,
            arch=self.arch,
            T=self.T,
            num_vars=self.b.num_vars,
            clauses=self.b.clauses,
            varmap=self.b.varmap,
        )


def encode(spec: ProblemSpec, arch: ArchConfig, T: int) -> CnfInstance:
    """CNF that is satisfiable iff a valid schedule of <= T cycles exists."""
    return _Encoder(spec, arch, T).instance()


# ---------------------------------------------------------------------------
# Schedule <-> variable assignment
# ---------------------------------------------------------------------------


def _compute_desc(spec, comp, t, p):
    kind, dst = comp[0], comp[1]
    if kind == "mac" and dst[0] == "w'":
        return f"c|raw|{format_dataid(dst)}|l{comp[2][2]}|t{t}|p{p}"
    if kind == "eac":
        return f"c|eac|{format_dataid(dst)}|j{comp[2][2]}|t{t}|p{p}"
    if kind == "div":
        return f"c|div|{format_dataid(dst)}|t{t}|p{p}"
    return f"c|out|{format_dataid(dst)}|j{comp[2][2]}|t{t}|p{p}"


def assume_schedule(c: CnfInstance, s: Schedule) -> CnfInstance:
    """Pin every decision variable to the given schedule; the result is
    satisfiable exactly when the encoder accepts the schedule."""
    if s.spec != c.spec or s.arch.m != c.arch.m:
        raise ScheduleOutOfBounds("schedule was built for a different instance")
    if s.num_cycles > c.T:
        raise ScheduleOutOfBounds(
            f"schedule has {s.num_cycles} cycles, instance allows {c.T}")
    qr, kr, vr = elem_roles(c.spec.scheme)
    positive = set()
    for p, items in enumerate(s.initial, start=1):
        for e in items:
            desc = f"ep|{format_dataid(e)}|p{p}"
            if desc not in c.varmap:
                raise ScheduleOutOfBounds(f"no variable for {desc}")
            positive.add(c.varmap[desc])
    for t, cycle in enumerate(s.cycles, start=1):
        for p, act in enumerate(cycle, start=1):
            if act.compute is not None:
                desc = _compute_desc(c.spec, act.compute, t, p)
                idx = c.varmap.get(desc)
                if idx is None:
                    raise ScheduleOutOfBounds(f"compute {act.compute!r} at "
                                              f"t={t} p={p} is outside the encoding")
                # the descriptor alone does not pin the operand roles;
                # reject operand combinations the encoder never emits
                if not _operands_match(c.spec, act.compute, qr, kr, vr):
                    raise ScheduleOutOfBounds(f"compute {act.compute!r} uses "
                                              "operands outside the encoding")
                positive.add(idx)
            if act.transfer is not None:
                datum, store_as = act.transfer
                if store_as == datum:
                    desc = f"trans|{format_dataid(datum)}|t{t}|p{p}"
                else:
                    desc = f"transr|{format_dataid(datum)}|t{t}|p{p}"
                    if not (datum[0] == "w'" and store_as == ("w'", datum[2], datum[1])):
                        raise ScheduleOutOfBounds(
                            f"transfer {act.transfer!r} is outside the encoding")
                idx = c.varmap.get(desc)
                if idx is None:
                    raise ScheduleOutOfBounds(f"no variable for {desc}")
                positive.add(idx)
    units = []
    for desc, idx in c.varmap.items():
        if desc.startswith(("ep|", "c|", "trans|", "transr|")):
            units.append(idx if idx in positive else -idx)
    return c.with_units(units)


def _operands_match(spec, comp, qr, kr, vr):
    kind, dst = comp[0], comp[1]
    if kind == "mac" and dst[0] == "w'":
        a, b = comp[2], comp[3]
        return (a[0], a[1]) == (qr, dst[1]) and (b[0], b[1]) == (kr, dst[2]) \
            and a[2] == b[2]
    if kind == "eac":
        return comp[2][0] == "w'" and comp[2][1] == dst[1]
    if kind == "div":
        return comp[2] == ("e", dst[1], dst[2]) and comp[3] == ("s", dst[1])
    a, b = comp[2], comp[3]
    return a[0] == "w" and a[1] == dst[1] and b == (vr, a[2], dst[2])


def decode(c: CnfInstance, model) -> Schedule:
    """Rebuild a schedule from the true decision variables of a model."""
    true = {l for l in model if l > 0}
    qr, kr, vr = elem_roles(c.spec.scheme)
    m = c.arch.m
    initial = [set() for _ in range(m)]
    computes: dict = {}
    transfers: dict = {}
    for desc, idx in c.varmap.items():
        if idx not in true:
            continue
        parts = desc.split("|")
        if parts[0] == "ep":
            p = int(parts[2][1:])
            initial[p - 1].add(parse_dataid(parts[1], c.spec))
            continue
        if parts[0] not in ("c", "trans", "transr"):
            continue
        t, p = int(parts[-2][1:]), int(parts[-1][1:])
        if not (1 <= t <= c.T):
            raise ModelInconsistent(f"{desc} is outside the horizon")
        if parts[0] == "c":
            dst = parse_dataid(parts[2], c.spec)
            if parts[1] == "raw":
                l = int(parts[3][1:])
                comp = ("mac", dst, (qr, dst[1], l), (kr, dst[2], l))
            elif parts[1] == "eac":
                j = int(parts[3][1:])
                comp = ("eac", dst, ("w'", dst[1], j))
            elif parts[1] == "div":
                comp = ("div", dst, ("e", dst[1], dst[2]), ("s", dst[1]))
            else:
                j = int(parts[3][1:])
                comp = ("mac", dst, ("w", dst[1], j), (vr, j, dst[2]))
            if (t, p) in computes:
                raise ModelInconsistent(f"two computes on PE {p} in cycle {t}")
            computes[(t, p)] = comp
        else:
            datum = parse_dataid(parts[1], c.spec)
            store = datum if parts[0] == "trans" else ("w'", datum[2], datum[1])
            if (t, p) in transfers:
                raise ModelInconsistent(f"two transfers on PE {p} in cycle {t}")
            transfers[(t, p)] = (datum, store)
    cycles = []
    for t in range(1, c.T + 1):
        cycles.append([
            PEAction(
                compute=computes.get((t, p)),
                transfer=transfers.get((t, p)),
                phase=None,
            )
            for p in range(1, m + 1)
        ])
    return Schedule(
        spec=c.spec,
        arch=c.arch,
        initial=[frozenset(s) for s in initial],
        cycles=cycles,
    )


# ---------------------------------------------------------------------------
# DIMACS text, external solver, sweep
# ---------------------------------------------------------------------------


def emit_cnf_text(c: CnfInstance) -> str:
    lines = [f"p cnf {c.num_vars} {len(c.clauses)}"]
    for clause in c.clauses:
        lines.append(" ".join(str(l) for l in clause) + " 0")
    return "\n".join(lines) + "\n"


def parse_solver_output(text: str):
    """Returns ("SAT", {true variables}) or ("UNSAT", None)."""
    status = None
    lits: list[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("s "):
            line = line[2:].strip()
        if line.startswith("v "):
            line = line[2:]
        word = line.upper()
        if word in ("SATISFIABLE", "SAT"):
            status = "SAT"
            continue
        if word in ("UNSATISFIABLE", "UNSAT"):
            status = "UNSAT"
            continue
        try:
            lits.extend(int(tok) for tok in line.split())
        except ValueError:
            continue
    if status is None:
        raise ParseError("solver output carries no SAT/UNSAT verdict")
    if status == "UNSAT":
        return ("UNSAT", None)
    return ("SAT", {l for l in lits if l > 0})


def run_solver(c: CnfInstance, solver: str | None = None,
               timeout: float | None = None):
    """Write DIMACS, run the external solver, parse its verdict."""
    cmd = solver or os.environ.get("SAT_SOLVER")
    if not cmd:
        raise SolverError("no SAT solver configured: pass --solver or set "
                          "the SAT_SOLVER environment variable")
    with tempfile.NamedTemporaryFile(
        "w", suffix=".cnf", prefix="attnring-", delete=False
    ) as fh:
        fh.write(emit_cnf_text(c))
        path = fh.name
    try:
        proc = subprocess.run(
            shlex.split(cmd) + [path],
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired as exc:
        raise BudgetExhausted(f"solver exceeded {timeout}s on T={c.T}") from exc
    finally:
        try:
            os.unlink(path)
        except OSError:
            pass
    try:
        return parse_solver_output(proc.stdout)
    except ParseError as exc:
        raise SolverError(
            f"solver failed (exit {proc.returncode}): {proc.stderr.strip()[:500]}"
        ) from exc


@dataclass
class MinSearchResult:
    best_T: int | None
    schedule: Schedule | None
    proven_unsat: list[int] = field(default_factory=list)


def min_cycle_search(
    spec: ProblemSpec,
    arch: ArchConfig,
    lower: int,
    upper: int,
    budget: float = 600.0,
    solver: str | None = None,
) -> MinSearchResult:
    """Sweep deadlines upward; first satisfiable T wins."""
    if lower > upper:
        raise ModelError(f"empty deadline range [{lower}, {upper}]")
    start = time.monotonic()
    result = MinSearchResult(best_T=None, schedule=None)
    for T in range(lower, upper + 1):
        remaining = budget - (time.monotonic() - start)
        if remaining <= 0:
            raise BudgetExhausted(
                f"budget spent before T={T}", partial=result)
        c = encode(spec, arch, T)
        try:
            status, model = run_solver(c, solver, timeout=remaining)
        except BudgetExhausted as exc:
            exc.partial = result
            raise
        if status == "UNSAT":
            result.proven_unsat.append(T)
        else:
            result.best_T = T
            result.schedule = decode(c, model)
            return result
    return result


# ---------------------------------------------------------------------------
# Varmap sidecar (decode needs spec/arch/T plus the decision variables)
# ---------------------------------------------------------------------------


def save_varmap(c: CnfInstance, path: str) -> None:
    doc = {
        "spec": {"n": c.spec.n, "d": c.spec.d, "m": c.spec.m, "scheme": c.spec.scheme},
        "arch": {"m": c.arch.m, "register_capacity": c.arch.register_capacity},
        "T": c.T,
        "num_vars": c.num_vars,
        "varmap": c.varmap,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_varmap(path: str) -> CnfInstance:
    with open(path) as fh:
        doc = json.load(fh)
    sp = doc["spec"]
    spec = validate_spec(sp["n"], sp["d"], sp["m"], sp["scheme"])
    arch = ArchConfig(m=doc["arch"]["m"],
                      register_capacity=doc["arch"].get("register_capacity"))
    return CnfInstance(
        spec=spec,
        arch=arch,
        T=doc["T"],
        num_vars=doc["num_vars"],
        clauses=[],
        varmap={k: int(v) for k, v in doc["varmap"].items()},
    )
