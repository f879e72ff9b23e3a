"""Simulation toolkit for cluster-state generation in networks of coupled
degenerate optical parametric oscillators.

Layers:

- :mod:`dopocluster.fock` — truncated number-basis operators and states
- :mod:`dopocluster.lindblad` — open-system propagation
- :mod:`dopocluster.dopo` — oscillator-network Hamiltonians, dissipators,
  target states, and pump calibration
- :mod:`dopocluster.modular` — modular-variable spin reduction and the
  cluster witness
- :mod:`dopocluster.experiments` / :mod:`dopocluster.output` /
  :mod:`dopocluster.cli` — named scenarios, sweeps, and result files
"""

__version__ = "0.1.0"

from .errors import (
    CalibrationError,
    ConfigError,
    CostLimitError,
    CutoffError,
    DopoClusterError,
    IntegratorDivergedError,
    LayoutError,
    PositivityWarning,
    TruncationWarning,
    ValidationError,
)
from .fock import (
    DensityMatrix,
    ModeLayout,
    QOperator,
    StateVector,
    annihilation,
    cat_state,
    coherent_state,
    creation,
    expectation,
    fidelity_to_pure,
    fock_state,
    identity_operator,
    momentum_operator,
    number_operator,
    partial_trace,
    position_operator,
    purity,
    tensor,
    truncation_cutoff,
    vacuum_state,
)
from .lindblad import (
    Dissipator,
    IntegratorConfig,
    LindbladModel,
    Trajectory,
    cycle_channel,
    evolve,
    stable_timestep,
    steady_reached,
)
from .dopo import (
    DopoParams,
    cat_plus_state,
    chain_pairs,
    coherent_ising_h,
    collective_loss,
    default_timestep,
    fresh_pump_state,
    ideal_cluster_state,
    nonlinear_window_timestep,
    nonlinear_pump_h,
    pump_calibration,
    single_photon_loss,
    steady_amplitude,
    two_photon_loss,
    two_photon_pump_h,
)
from .modular import (
    EffectiveSpinState,
    ModularCell,
    cluster_witness,
    displacement_operator,
    effective_spin_state,
    modular_pauli,
    optimal_cell_length,
    spin_fidelity,
    translation_operator,
    witness_threshold,
)
from .experiments import (
    SCENARIOS,
    ScenarioConfig,
    SweepResult,
    config_hash,
    estimate_cost,
    parse_config_text,
    resolve_config,
    run_protocol,
    run_sweep,
    serialize_config,
)

__all__ = [
    "__version__",
    # errors
    "DopoClusterError",
    "LayoutError",
    "ValidationError",
    "CutoffError",
    "ConfigError",
    "CostLimitError",
    "IntegratorDivergedError",
    "CalibrationError",
    "TruncationWarning",
    "PositivityWarning",
    # fock
    "ModeLayout",
    "QOperator",
    "DensityMatrix",
    "StateVector",
    "annihilation",
    "creation",
    "number_operator",
    "position_operator",
    "momentum_operator",
    "identity_operator",
    "truncation_cutoff",
    "fock_state",
    "vacuum_state",
    "coherent_state",
    "cat_state",
    "tensor",
    "partial_trace",
    "expectation",
    "fidelity_to_pure",
    "purity",
    # lindblad
    "Dissipator",
    "LindbladModel",
    "IntegratorConfig",
    "Trajectory",
    "evolve",
    "stable_timestep",
    "steady_reached",
    "cycle_channel",
    # dopo
    "DopoParams",
    "steady_amplitude",
    "default_timestep",
    "chain_pairs",
    "two_photon_pump_h",
    "two_photon_loss",
    "single_photon_loss",
    "collective_loss",
    "coherent_ising_h",
    "nonlinear_pump_h",
    "ideal_cluster_state",
    "cat_plus_state",
    "fresh_pump_state",
    "nonlinear_window_timestep",
    "pump_calibration",
    # modular
    "ModularCell",
    "optimal_cell_length",
    "displacement_operator",
    "translation_operator",
    "modular_pauli",
    "EffectiveSpinState",
    "effective_spin_state",
    "witness_threshold",
    "cluster_witness",
    "spin_fidelity",
    # experiments
    "SCENARIOS",
    "ScenarioConfig",
    "SweepResult",
    "parse_config_text",
    "serialize_config",
    "config_hash",
    "resolve_config",
    "run_protocol",
    "run_sweep",
    "estimate_cost",
]
