from .base import (
    LENSES,
    ConceptDiagnosis,
    CountingSimulator,
    Level,
    ScmBinding,
    SimProblem,
    Simulator,
    SimulatorError,
    SimulatorFidelity,
    TrialOutcome,
    load_problems,
    save_problems,
)
from .endpoint import EndpointConfig, EndpointError, EndpointSimulator
from .perturbed import PerturbedSimulator, TvGap, measure_tv_gap, perturb
from .synthetic import SyntheticSimulator, level_for

__all__ = [
    "LENSES", "ConceptDiagnosis", "CountingSimulator", "EndpointConfig", "EndpointError", "EndpointSimulator",
    "Level", "PerturbedSimulator", "ScmBinding", "SimProblem", "Simulator", "SimulatorError", "SimulatorFidelity",
    "SyntheticSimulator", "TrialOutcome", "TvGap", "level_for", "load_problems", "measure_tv_gap", "perturb",
    "save_problems",
]
