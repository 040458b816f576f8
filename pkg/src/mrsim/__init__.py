"""Particle simulation of mean-reflected McKean-Vlasov SDEs."""

from .measure import EmpiricalMeasure, expectation, wasserstein
from .model import CoefficientSpec, ConstraintSpec, validate
from .rng import InitialLawSpec, StreamKey, gaussian, sample_initial
from .scheme import (
    ControlPath,
    DriverSpec,
    PathRecord,
    Profile,
    TimeGrid,
    simulate,
    simulate_reflected_ode,
    simulate_skeleton,
)

__version__ = "0.1.0"
