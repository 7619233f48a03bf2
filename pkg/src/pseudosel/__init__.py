"""Penalized pseudolikelihood feature selection for integrating experiments."""
from .data import (ExperimentData, MultiExperimentDataset, ParameterState, group_norm,
                   group_view, load_dataset, write_dataset)
from .errors import (DataValidationError, NumericalError, PseudoselError, SelectionError,
                     SingularMatrixError)
from .optimizer import (FitControls, FitResult, PathGrid, SolutionPath, fit, fit_path,
                        kkt_check, lambda_max, penalized_objective)
from .penalty import PenaltySpec, group_threshold, scad_deriv, scad_value
from .pseudolik import (godambe, information_matrices, pseudo_loglik, pseudo_neg_hessian,
                        pseudo_score, sandwich_se)
from .selection import GammaSpec, effective_df, pseu_bic, refit, select_model
from .simulation import ScenarioConfig, evaluate_selection, run_study, simulate

__version__ = "0.1.0"
