"""Scene-history trajectory prediction: a clustered trajectory bank, a cross-modal refinement network
and curvature-aware evaluation, all in numpy."""

from .bank import TrajectoryBank, init_bank, load_bank, save_bank
from .errors import (ConfigError, DataError, EvaluationError, FormatError, FrozenBankError, GraphError, NumericError,
                     ParseError, ShapeError, ShenetError, StateError, UndefinedSimilarityError)
from .kmedoids import kmedoids
from .metrics import EvalReport, ade, best_of_k, cs_ade, cs_fde, evaluate, fde
from .pipeline import ShenetModel, predict, run_experiment, train
from .smoothing import ControlRule, smooth_trajectory
from .trajdata import Dataset, SceneRaster, Trajectory, generate_synthetic_scene, load_trajectory_file

__version__ = "0.1.0"
