"""Branching random walk and fragmentation presence-probability toolkit."""

from .analytic import FragSpectrum, Spectrum, skeleton_spectrum_residual
from .backend import active_backend
from .brw import (estimate_G, estimate_K, lclt_limit, simulate_population,
                  u_grid, u_palm_representation, v_grid, v_tilted)
from .conditioning import Kp_via_skeleton, conditioned_law
from .frag import (DislocationModel, FragmentationState, build_skeleton_ensemble,
                   estimate_UV, make_dislocation, martingale_mean, martingale_value,
                   sample_final_masses, simulate_fragmentation)
from .grids import GridField, TestFunction
from .levy import (DualLevyLaw, build_dual_levy, centering_residual,
                   estimate_G_levy, scaled_count_limit, v_levy)
from .offspring import (EmpiricalModel, OffspringModel, PalmKernel,
                        TiltedStepLaw, empirical_cumulant, make_offspring,
                        sample_offspring, sample_palm)
from .reporting import EstimatorReport

__version__ = "0.1.0"

__all__ = [
    "EstimatorReport", "Spectrum", "FragSpectrum", "TiltedStepLaw",
    "OffspringModel", "EmpiricalModel", "PalmKernel", "make_offspring",
    "sample_offspring", "sample_palm", "empirical_cumulant",
    "skeleton_spectrum_residual",
    "GridField", "TestFunction", "u_grid", "v_grid", "v_tilted", "lclt_limit",
    "u_palm_representation", "estimate_G", "estimate_K", "simulate_population",
    "DislocationModel", "make_dislocation", "FragmentationState",
    "simulate_fragmentation", "estimate_UV", "martingale_value", "martingale_mean",
    "build_skeleton_ensemble", "sample_final_masses", "DualLevyLaw",
    "build_dual_levy", "centering_residual", "v_levy", "scaled_count_limit",
    "estimate_G_levy", "Kp_via_skeleton", "conditioned_law", "active_backend",
]
