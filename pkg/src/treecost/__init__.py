"""Runtime prediction for tensor-program configurations.

Programs are loop trees; models map a tree (or a curve summary of it) to a
predicted runtime. The package covers graph containers and storage, a
synthetic generator with an analytic runtime oracle, the model families,
the cross-workload training protocol, and a CLI.
"""

from .curves import extract_curves
from .graphs import (AstGraph, Dataset, DatasetError, GraphValidationError,
                     WorkloadMeta, children, load_dataset, save_dataset,
                     topological_order)
from .models import (LABELS, ModelSpec, Surrogate, aggregate, build_surrogate,
                     encode_nodes, load_checkpoint, predict, propagate,
                     save_checkpoint)
from .experiment import (RunResult, Split, SplitPlan, SweepError,
                         TrainingDiverged, make_split, predict_many, report,
                         sweep, train_model)
from .synth import SynthConfig, generate, make_rewired_pairs, oracle_runtime

__version__ = "0.1.0"

__all__ = [
    "AstGraph", "Dataset", "WorkloadMeta", "DatasetError", "GraphValidationError",
    "children", "topological_order", "save_dataset", "load_dataset",
    "SynthConfig", "generate", "make_rewired_pairs", "oracle_runtime",
    "extract_curves",
    "LABELS", "ModelSpec", "Surrogate", "build_surrogate",
    "encode_nodes", "propagate", "aggregate", "predict",
    "save_checkpoint", "load_checkpoint",
    "SplitPlan", "Split", "make_split", "RunResult", "train_model",
    "predict_many", "sweep", "report", "TrainingDiverged", "SweepError",
    "__version__",
]
