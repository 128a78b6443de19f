"""Schedules for self-attention on a unidirectional ring of PEs:
generation, cycle-accurate simulation, numeric verification against a
reference oracle, and SAT-based optimality checks."""

from .model import (
    ArchConfig,
    ModelError,
    ParseError,
    PEAction,
    ProblemSpec,
    Schedule,
    parse_schedule,
    serialize_schedule,
    validate_schedule,
    validate_spec,
)
from .oracle import (
    OracleResult,
    computation_counts,
    predict_cycles,
    random_inputs,
    reference_attention,
)
from .simulator import (
    ExecutionReport,
    Violation,
    check_validity,
    execute,
    memory_high_water,
)
from .generators import compact, gen_algo1, gen_algo2, gen_algo3, group_plan
from .satbridge import (
    CnfInstance,
    assume_schedule,
    decode,
    emit_cnf_text,
    encode,
    min_cycle_search,
    parse_solver_output,
    run_solver,
)

__version__ = "0.1.0"
