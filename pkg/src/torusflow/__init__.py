"""Pseudo-spectral two-phase flow on the periodic torus.

Compressible and incompressible Navier-Stokes coupled to conserved
(Cahn-Hilliard) or relaxational (Allen-Cahn) phase dynamics, plus a sweep
harness measuring the low-Mach convergence rates.
"""

from .constitutive import Constitutive, ModelKind, chemical_potential, double_well, double_well_prime
from .diagnostics import (
    ConservationReport,
    EnergyReport,
    SobolevSpec,
    conservation_ledger,
    energy_compressible,
    energy_incompressible,
    functional_Es,
    functional_Es_weighted,
    functional_Fs,
    modulated_energy,
    sobolev_norm,
)
from .dynamics import (
    CompressibleState,
    CompressibleTendency,
    IncompressibleState,
    IncompressibleTendency,
    PRESETS,
    capillary_force,
    initial_from_preset,
    make_compressible,
    primitives,
    rhs_compressible,
    rhs_incompressible,
    single_mode,
    taylor_green_bubble,
    well_prepared_initial,
)
from .errors import ConfigError, NumericsError, SnapshotError, VacuumError
from .io import (
    RunConfig,
    load_config,
    load_sweep_config,
    read_snapshot,
    snapshot_header,
    write_snapshot,
    write_timeseries,
)
from .spectral import (
    Field,
    TorusGrid,
    VectorField,
    biharmonic,
    constant_field,
    dealias,
    dealiased_product,
    derivative,
    divergence,
    field_from_values,
    gradient,
    hs_norm,
    integral,
    l2_norm,
    laplacian,
    leray_project,
    random_band_limited,
    refine,
    solve_biharmonic_shift,
    solve_helmholtz,
    to_physical,
    to_spectral,
)
from .stepper import (
    PicardOptions,
    PicardReport,
    StepperConfig,
    acoustic_dt,
    phase_dt,
    default_dt,
    integrate,
    picard_step,
    step_compressible_rk4,
    step_imex,
    step_incompressible_rk4,
    step_rk4,
)
from .sweep import (
    EpsRecord,
    SweepConfig,
    SweepResult,
    acoustic_dispersion_check,
    fit_rate,
    run_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "CompressibleState",
    "CompressibleTendency",
    "ConfigError",
    "ConservationReport",
    "Constitutive",
    "EnergyReport",
    "EpsRecord",
    "Field",
    "IncompressibleState",
    "IncompressibleTendency",
    "ModelKind",
    "NumericsError",
    "PRESETS",
    "PicardOptions",
    "PicardReport",
    "RunConfig",
    "SnapshotError",
    "SobolevSpec",
    "StepperConfig",
    "SweepConfig",
    "SweepResult",
    "TorusGrid",
    "VacuumError",
    "VectorField",
    "acoustic_dispersion_check",
    "acoustic_dt",
    "phase_dt",
    "biharmonic",
    "capillary_force",
    "chemical_potential",
    "conservation_ledger",
    "constant_field",
    "dealias",
    "dealiased_product",
    "default_dt",
    "derivative",
    "divergence",
    "double_well",
    "double_well_prime",
    "energy_compressible",
    "energy_incompressible",
    "field_from_values",
    "fit_rate",
    "functional_Es",
    "functional_Es_weighted",
    "functional_Fs",
    "gradient",
    "hs_norm",
    "initial_from_preset",
    "integral",
    "integrate",
    "l2_norm",
    "laplacian",
    "leray_project",
    "load_config",
    "load_sweep_config",
    "make_compressible",
    "modulated_energy",
    "picard_step",
    "primitives",
    "random_band_limited",
    "read_snapshot",
    "refine",
    "rhs_compressible",
    "rhs_incompressible",
    "run_sweep",
    "single_mode",
    "snapshot_header",
    "sobolev_norm",
    "solve_biharmonic_shift",
    "solve_helmholtz",
    "step_compressible_rk4",
    "step_imex",
    "step_incompressible_rk4",
    "step_rk4",
    "taylor_green_bubble",
    "to_physical",
    "to_spectral",
    "well_prepared_initial",
    "write_snapshot",
    "write_timeseries",
]
