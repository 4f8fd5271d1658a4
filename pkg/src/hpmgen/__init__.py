"""Twin-network hidden-physics surrogates for reaction-diffusion systems.

One network learns the PDE solution field from measurement data, a second
learns the unknown part of the governing equation from the PDE residual,
and both train jointly so the model generalizes across unseen input
functions, PDE parameters, and domain lengths.
"""

__version__ = "0.1.0"

from .datasets import (
    CollocationBatch,
    DatasetRecord,
    MeasurementSet,
    SensorVector,
    build_dataset,
    lhs_sample,
    load_dataset,
    sample_measurements,
    sensor_vector,
)
from .errors import OracleError, TrainingError, ValidationError
from .evaluation import (
    EvalCase,
    EvalReport,
    error_distribution,
    evaluate_on_function,
    hidden_field_comparison,
    parameter_sweep,
    predict_field,
    relative_l2_error,
)
from .model import (
    FunctionContext,
    HiddenPhysicsModel,
    LossBreakdown,
    Scenario,
    assemble_features,
    data_loss,
    equation_loss,
    new_model,
    predict_state,
    residual,
    total_loss,
)
from .networks import AdamState, NetworkParams, adam_step, forward, init_adam, init_glorot
from .oracle import (
    InputFunctionSpec,
    PdeParams,
    SolutionField,
    SpaceTimeGrid,
    default_grid,
    eval_input_function,
    ftcs_solve,
    random_periodic,
)
from .presets import PRESETS, get_preset
from .training import (
    Checkpoint,
    TrainConfig,
    TrainLog,
    TrainResult,
    load_checkpoint,
    resume,
    save_checkpoint,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
