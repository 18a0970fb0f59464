"""Daily epidemic control synthesis under metric temporal logic specifications."""

from .mtl import (
    TRUE,
    Always,
    And,
    Atom,
    Eventually,
    MtlError,
    MtlFormula,
    MtlSyntaxError,
    Not,
    Or,
    TimeIndexInterval,
    Trajectory,
    TrajectoryTooShortError,
    Until,
    eval_bool,
    eval_robustness,
    format_formula,
    horizon,
    parse_formula,
    smooth_robustness,
)
from .models import (
    ModelError,
    ModelSpec,
    SeirParams,
    SeirState,
    SimulationError,
    SuqcParams,
    SuqcState,
    seir_shield_model,
    seir_vaccination_model,
    simulate,
    step_seir_shield,
    step_seir_vaccination,
    step_suqc,
    suqc_quarantine_model,
    trajectory_to_csv,
)

__version__ = "0.1.0"
