"""Pseudospectral lab for damped dispersive equations with delayed feedback.

Simulates u_t + (-1)^(j+1) d^(2j+1)u + (-1)^m d^(2m)u + damping(x) u
+ coupling(x) u(t - tau) + (1/(p+1)) d(u^(p+1)) = 0 on a periodic box,
and checks the computable objects of its stability theory: energy
identities, admissibility conditions, and exponential decay envelopes.
"""

from .certificates import (
    CertificateCondition,
    StabilityCertificate,
    c_q,
    certify_constant_sign,
    certify_indefinite,
    ct_constant,
    envelope_constant,
    rate_nu,
    rate_nu_tilde,
)
from .diagnostics import (
    DecayFit,
    EnergyTrace,
    balance_residual,
    check_gn_ratio,
    check_interpolation_inequality,
    energy,
    fit_decay_rate,
    fit_trace_decay,
    lyapunov,
    read_trace_csv,
    write_trace_csv,
)
from .errors import (
    CertificateNotApplicableError,
    ConfigurationError,
    DecayFitError,
    DivergedError,
    GridMismatchError,
    HistoryAlignmentError,
    RepresentationError,
)
from .grid import (
    Field,
    Grid,
    l2_norm,
    lq_norm,
    make_grid,
    sobolev_norm,
    spectral_derivative,
    sup_norm,
    to_physical,
    to_spectral,
)
from .history import (
    DelayHistory,
    delayed_state,
    history_from_field,
    init_history,
    load_snapshot,
    memory_integral,
    push,
    save_snapshot,
)
from .operators import (
    CoefficientSet,
    OperatorParams,
    apply_generator,
    linear_symbol,
    nonlinearity,
    resolvent_solve,
    resolvent_symbol,
    rhs,
)
from .stepping import (
    EtdTables,
    SimState,
    etd_coefficients,
    load_checkpoint,
    new_simulation,
    phi1,
    phi2,
    phi3,
    run,
    save_checkpoint,
    set_linear_mode,
    step,
)

__version__ = "0.1.0"
