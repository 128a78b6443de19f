"""Acceptance gate: one test per criterion, one printed verdict line each.

Run with plain ``pytest -v``; the verdict lines bypass output capture so
they always appear on the terminal.  Criterion 7's stretch instances are
off by default (set RUN_STRETCH=1 to include them; they get a one-hour
budget and never block the gate).
"""

import os
import time

import numpy as np
import pytest

from attnring import (
    assume_schedule,
    check_validity,
    computation_counts,
    decode,
    encode,
    execute,
    min_cycle_search,
    predict_cycles,
    random_inputs,
    run_solver,
)
from attnring.generators import gen_algo1, gen_algo2, gen_algo3
from attnring.model import ArchConfig, DISTINCT, MASKED, SHARED, ProblemSpec
from attnring.oracle import BASELINE, MASK, SYMMETRY

# Pinned targets.
ALGO1_CYCLES = {(3, 3): 24, (4, 4): 40, (5, 5): 60, (6, 3): 168,
                (6, 6): 84, (15, 5): 1440, (15, 15): 480, (17, 17): 612}
ALGO3_CYCLES = {(3, 3): 18, (4, 4): 32, (5, 5): 40, (6, 3): 120,
                (6, 6): 60, (15, 5): 810, (15, 15): 270, (17, 17): 340}
ALGO2_TARGETS = {(3, 3): 21, (4, 4): 36, (5, 5): 50, (6, 3): 146,
                 (6, 6): 73, (15, 5): 1134, (15, 15): 396}
ALGO2_EXACT = {(3, 3), (4, 4)}
ALGO2_TOLERANCE = 0.04
NUMERIC_TOL = 1e-9
NUM_SEEDS = 10
GRID_BUDGET_S = 120.0
SAT_BUDGET_S = 600.0
STRETCH_BUDGET_S = 3600.0


def spec(n, m, scheme):
    return ProblemSpec(n=n, d=n, m=m, scheme=scheme)


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, detail


def grid_pairs():
    for n in range(3, 13):
        for m in range(1, n + 1):
            if n % m == 0:
                yield n, m
    yield 15, 5
    yield 15, 15


def test_criterion_1_algo1_cycle_counts(capsys):
    bad = []
    for (n, m), want in sorted(ALGO1_CYCLES.items()):
        s = gen_algo1(spec(n, m, DISTINCT))
        if s.num_cycles != want or not check_validity(s).ok:
            bad.append((n, m, s.num_cycles, want))
    verdict(capsys, 1, not bad,
            f"algorithm-1 cycle counts exact on {len(ALGO1_CYCLES)} (n, m) "
            f"pairs" + (f"; mismatches: {bad}" if bad else ""))


def test_criterion_2_algo3_cycle_counts(capsys):
    bad = []
    for (n, m), want in sorted(ALGO3_CYCLES.items()):
        s = gen_algo3(spec(n, m, MASKED))
        if s.num_cycles != want or not check_validity(s).ok:
            bad.append((n, m, s.num_cycles, want))
    big = predict_cycles(3, 10_000, 5_000)
    closed_ok = big == 200_080_000
    verdict(capsys, 2, not bad and closed_ok,
            f"algorithm-3 cycle counts exact on {len(ALGO3_CYCLES)} pairs; "
            f"closed form at n=10000, m=5000 gives {big:,}"
            + (f"; mismatches: {bad}" if bad else ""))


def test_criterion_3_algo2_cycle_counts(capsys):
    bad, reuse = [], []
    for (n, m), target in sorted(ALGO2_TARGETS.items()):
        s = gen_algo2(spec(n, m, SHARED))
        got = s.num_cycles
        a1 = gen_algo1(spec(n, m, SHARED)).num_cycles
        r = got - predict_cycles(2, n, m)
        reuse.append(f"({n},{m}) R={r}")
        if (n, m) in ALGO2_EXACT:
            ok = got == target
        else:
            ok = got <= a1 and got <= target * (1 + ALGO2_TOLERANCE)
        if not (ok and check_validity(s).ok):
            bad.append((n, m, got, target))
    verdict(capsys, 3, not bad,
            "algorithm-2 exact at (3,3) and (4,4), within 4% elsewhere; "
            "transfer overhead " + ", ".join(reuse)
            + (f"; mismatches: {bad}" if bad else ""))


def _compute_count(schedule):
    return sum(1 for cyc in schedule.cycles for a in cyc if a.compute is not None)


def test_criterion_4_operation_savings(capsys):
    n, m = 15, 5
    base = computation_counts(spec(n, m, DISTINCT), BASELINE)["total"]
    sym = computation_counts(spec(n, m, SHARED), SYMMETRY)["total"]
    msk = computation_counts(spec(n, m, MASKED), MASK)["total"]
    sym_sched = _compute_count(gen_algo2(spec(n, m, SHARED)))
    msk_sched = _compute_count(gen_algo3(spec(n, m, MASKED)))
    base_sched = _compute_count(gen_algo1(spec(n, m, DISTINCT)))
    ok = (base, sym, msk) == (7200, 5625, 3840) and \
        (base_sched, sym_sched, msk_sched) == (base, sym, msk)
    verdict(capsys, 4, ok,
            f"n=15 operation counts: baseline {base}, shared-symmetry {sym} "
            f"({1 - sym / base:.0%} saved), mask {msk} ({1 - msk / base:.0%} "
            f"saved); schedules perform exactly {base_sched}/{sym_sched}/"
            f"{msk_sched} computes")


def test_criterion_5_simulation_grid(capsys):
    start = time.monotonic()
    bad = []
    worst = 0.0
    cases = 0
    for n, m in grid_pairs():
        for scheme, gen in ((DISTINCT, gen_algo1), (SHARED, gen_algo2),
                            (MASKED, gen_algo3)):
            sp = spec(n, m, scheme)
            triples = [random_inputs(sp, seed=s) for s in range(NUM_SEEDS)]
            stacked = tuple(
                np.stack([t[i] for t in triples], axis=-1) for i in range(3))
            rep = execute(gen(sp), inputs=stacked, strict_masked=True)
            cases += 1
            worst = max(worst, rep.max_rel_err)
            if rep.violations or rep.max_rel_err > NUMERIC_TOL:
                bad.append((n, m, scheme, rep.violations[:2], rep.max_rel_err))
    elapsed = time.monotonic() - start
    ok = not bad and elapsed < GRID_BUDGET_S
    verdict(capsys, 5, ok,
            f"{cases} schedules x {NUM_SEEDS} seeds: zero violations, worst "
            f"relative error {worst:.2e} (tol {NUMERIC_TOL:.0e}), "
            f"{elapsed:.1f}s (budget {GRID_BUDGET_S:.0f}s)"
            + (f"; failures: {bad[:3]}" if bad else ""))


def test_criterion_6_sat_certification(capsys):
    start = time.monotonic()
    notes = []
    ok = True

    c = encode(spec(3, 3, DISTINCT), ArchConfig(m=3), 24)
    status, model = run_solver(c, timeout=SAT_BUDGET_S)
    if status == "SAT":
        rep = check_validity(decode(c, model))
        ok &= rep.ok
        notes.append("free search at T=24 is SAT and decodes to a valid schedule")
    else:
        ok = False
        notes.append(f"free search at T=24 returned {status}")

    for scheme, gen, T in ((DISTINCT, gen_algo1, 24), (SHARED, gen_algo2, 21),
                           (MASKED, gen_algo3, 18)):
        sched = gen(spec(3, 3, scheme))
        inst = encode(sched.spec, sched.arch, T)
        remaining = SAT_BUDGET_S - (time.monotonic() - start)
        status, _ = run_solver(assume_schedule(inst, sched), timeout=remaining)
        ok &= status == "SAT"
        notes.append(f"{scheme} generator certified at T={T}: {status}")
    elapsed = time.monotonic() - start
    ok &= elapsed < SAT_BUDGET_S
    verdict(capsys, 6, ok, "; ".join(notes) + f" ({elapsed:.0f}s)")


def test_criterion_7_masked_optimum(capsys):
    r = min_cycle_search(spec(3, 3, MASKED), ArchConfig(m=3), 16, 17,
                         budget=SAT_BUDGET_S)
    ok = r.proven_unsat == [16] and r.best_T == 17 \
        and check_validity(r.schedule).ok
    verdict(capsys, 7, ok,
            f"masked (3,3): T=16 proven UNSAT, T=17 SAT with a valid decoded "
            f"schedule (got unsat={r.proven_unsat}, best={r.best_T})")


@pytest.mark.skipif(not os.environ.get("RUN_STRETCH"),
                    reason="stretch instances run only with RUN_STRETCH=1")
def test_criterion_7_stretch_instances(capsys):
    lines = []
    ok = True
    deadline = time.monotonic() + STRETCH_BUDGET_S
    for scheme, best in ((MASKED, 26), (SHARED, 35)):
        budget = deadline - time.monotonic()
        try:
            r = min_cycle_search(spec(4, 4, scheme), ArchConfig(m=4),
                                 best - 1, best, budget=budget)
            good = r.proven_unsat == [best - 1] and r.best_T == best
            ok &= good
            lines.append(f"{scheme} (4,4): best={r.best_T}, "
                         f"unsat={r.proven_unsat}")
        except Exception as exc:  # noqa: BLE001 - stretch never blocks
            ok = False
            lines.append(f"{scheme} (4,4): {exc}")
    verdict(capsys, "7-stretch", ok, "; ".join(lines))


def test_criterion_8_utilization_and_memory(capsys):
    notes = []
    ok = True

    s = gen_algo1(spec(6, 3, DISTINCT))
    full = all(a.compute is not None for cyc in s.cycles for a in cyc)
    ok &= full
    notes.append(f"algorithm 1 computes on every PE every cycle: {full}")

    rep = execute(gen_algo3(spec(12, 4, MASKED)))
    p2 = (rep.utilization.get("2a", 0.0) + rep.utilization.get("2b", 0.0)) / 2
    in_band = 0.45 <= p2 <= 0.60
    ok &= in_band
    notes.append(f"algorithm 3 phase-2 utilization at n=12 is {p2:.2f}")

    worst = []
    for n, m in grid_pairs():
        bound = 4 * n * n // m
        for scheme, gen in ((DISTINCT, gen_algo1), (SHARED, gen_algo2),
                            (MASKED, gen_algo3)):
            sched = gen(spec(n, m, scheme))
            init = max(len(e) for e in sched.initial)
            hw = max(execute(sched).memory_high_water_per_pe)
            if init > bound or hw > bound:
                worst.append((n, m, scheme, init, hw, bound))
    ok &= not worst
    notes.append("per-PE placement and register high-water within 4n^2/m "
                 "on the full grid" + (f"; over: {worst[:3]}" if worst else ""))
    verdict(capsys, 8, ok, "; ".join(notes))
