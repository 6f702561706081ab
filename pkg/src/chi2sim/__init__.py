"""Truncated-Fock-space simulation of chi(2) down-conversion with a quantized, depleted pump."""

from .dynamics import (
    InitialSpec,
    LindbladModel,
    Scenario,
    build_degenerate_hamiltonian,
    build_hamiltonian,
    build_nondegenerate_hamiltonian,
    evolve_master,
    evolve_unitary,
    simulate,
)
from .errors import (
    Chi2SimError,
    ConsistencyError,
    DomainError,
    GridTooCoarse,
    IndexOutOfRange,
    InvalidState,
    InversePurityOnly,
    NoExtremum,
    NonMonotoneConvergence,
    ParseError,
    ResourceExceeded,
    SpaceMismatch,
    TailTooHeavy,
    ToleranceNotMet,
    TruncationLeakage,
    ValidationError,
)
from .fock import (
    CompositeSpace,
    ModeSpec,
    Operator,
    QuantumState,
    annihilation,
    coherent_state,
    creation,
    fock_state,
    number_operator,
    partial_trace,
    purity,
    state_health,
    tensor_product,
    vacuum,
)
from .integrate import SolverSettings
from .observables import (
    extremum_scan,
    fano_factor,
    mean_photon,
    observable_record,
    odd_parity_weight,
    photon_distribution,
    quadrature_variances,
    schmidt_number,
    squeezing_db,
)
from .validation import run_cutoff_ladder, short_time_expansion_check
from .wigner import WignerGrid, negativity_volume, wigner_of_mode

__version__ = "0.1.0"
