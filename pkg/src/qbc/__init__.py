"""Quantum bit commitment: concealment checks and the explicit EPR attack."""

from .tensor_core import (
    DensityMatrix,
    Party,
    SchmidtForm,
    StateVector,
    SubsystemLayout,
    overlap_up_to_phase,
    partial_trace,
    polar_unitary_factor,
    schmidt_decompose,
    trace_distance,
)
from .protocol_model import (
    DistributionFamily,
    ProtocolSpec,
    commit_state,
    parse_document,
    parse_protocol,
    random_concealing_instance,
    random_nonconcealing_instance,
    serialize,
    validate,
)
from .purification import effective_distribution, flatten, purify_branches, purify_commitment
from .attack_engine import (
    attack_overlap,
    attack_report,
    build_cheating_unitary,
    cheating_bound,
    concealment_check,
    epr_attack_run,
    verify_theorem1,
)
from .tolerances import DEFAULT, Tolerances

__version__ = "0.1.0"
