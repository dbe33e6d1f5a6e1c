"""Exact simulation of scaled birth-death and hopping processes."""

from .engine import EventRecord, SimState, Simulator
from .ensemble import (
    CosineProfile,
    EnsembleResult,
    ReplicaResult,
    SimPlan,
    run_ensemble,
    run_replica,
    sample_poisson_initial,
)
from .model import CompiledModel, UnsupportedRate, compile_model

__all__ = [
    "CompiledModel", "CosineProfile", "EnsembleResult", "EventRecord", "ReplicaResult", "SimPlan",
    "SimState", "Simulator", "UnsupportedRate", "compile_model", "run_ensemble", "run_replica",
    "sample_poisson_initial",
]
