"""Pseudo-spectral simulator and verification harness for truncated stochastic Hall-MHD."""
from .spectral import (
    ModeLattice,
    SobolevIndex,
    SpectralField,
    State,
    cutoff,
    derivative,
    forward_transform,
    inner_product_dirichlet,
    inner_product_H,
    inverse_transform,
    leray_project,
    make_lattice,
    sobolev_norm,
    subbox_seminorm,
    to_lattice,
)
from .operators import (
    PhysicsParams,
    form_b,
    form_hall,
    form_mhd,
    form_thall,
    map_B,
    map_Hall,
    map_MHD,
    map_tHall,
    project_rhs,
    stokes_apply,
)
from .noise import NoiseModel, NoiseDirection, FourierSeries, apply_G, hs_norm_sq, sample_increment, validate_noise
from .integrator import SimConfig, TrajectoryRecord, EnsembleResult, run_ensemble, simulate_path, step

__all__ = [name for name in dir() if not name.startswith("_")]
