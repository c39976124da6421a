"""Model presets, training, evaluation and the experiment sweeps."""

from .models import (
    DecisionModel,
    LayerKind,
    LayerSpec,
    ModelCost,
    ModelKind,
    ModelSpec,
    SpecError,
    ThresholdModel,
    build_model,
    load_model,
    model_cost,
    preset_spec,
    save_model,
)
from .sweeps import (
    BerCurve,
    BerRow,
    hard_decision_baseline,
    receiver_sensitivity,
    sensitivity_gain,
    sweep_activations,
    sweep_iterations,
    sweep_power,
    sweep_power_models,
    sweep_training_size,
)
from .training import DivergenceError, EmptyDatasetError, TrainConfig, TrainTrace, evaluate_ber, train

__all__ = [
    "BerCurve",
    "BerRow",
    "DecisionModel",
    "DivergenceError",
    "EmptyDatasetError",
    "LayerKind",
    "LayerSpec",
    "ModelCost",
    "ModelKind",
    "ModelSpec",
    "SpecError",
    "ThresholdModel",
    "TrainConfig",
    "TrainTrace",
    "build_model",
    "evaluate_ber",
    "hard_decision_baseline",
    "load_model",
    "model_cost",
    "preset_spec",
    "receiver_sensitivity",
    "save_model",
    "sensitivity_gain",
    "sweep_activations",
    "sweep_iterations",
    "sweep_power",
    "sweep_power_models",
    "sweep_training_size",
    "train",
]
