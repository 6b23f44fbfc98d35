"""Bell-inequality bounds for qubit measurements with calibrated settings."""

from .errors import (
    BellBoundsError,
    ConstraintError,
    DomainError,
    GridTooCoarseError,
    InputError,
    InternalConsistencyError,
    NonQuantumCalibrationError,
    ResourceError,
    UsageError,
)
from .expressions import BellExpression, Setting, bell_operator, bell_value, delta_epsilon, mk_operators
from .qubit import BlochState, Observable
from .bounds import (
    ANY_STATE,
    FULL,
    TWO_SEP,
    BoundReport,
    PartitionClass,
    Verdict,
    bounds_report,
    certify,
    chsh_bounds,
    chsh_structure_f,
    class_bound,
    decompose_observable,
    f3sum_bounds,
    f21_closed,
    general_setting_bound,
    mermin3_bounds,
    mk_bipartition_bound,
    mk_quantum_bound,
    quantum_bound,
    region_R_member,
)

__version__ = "0.1.0"
