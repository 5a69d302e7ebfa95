"""Semiparametric estimation for regression data contaminated by a known noise component."""

from .contrast import ContrastContext, NumericalError, d_n, grad_d_n, h_components
from .distributions import DistributionError, Gaussian, GaussianMixture, TabulatedDist, asymmetric_error
from .estimator import EstimateReport, OptimConfig, minimize, plugin_F_hat, plugin_f_hat, select_among_minima
from .model import ParamBox, ParameterError, Sample, Vartheta, simulate, simulate_asymmetric

__all__ = [
    "ContrastContext", "NumericalError", "d_n", "grad_d_n", "h_components",
    "DistributionError", "Gaussian", "GaussianMixture", "TabulatedDist", "asymmetric_error",
    "EstimateReport", "OptimConfig", "minimize", "plugin_F_hat", "plugin_f_hat", "select_among_minima",
    "ParamBox", "ParameterError", "Sample", "Vartheta", "simulate", "simulate_asymmetric",
]
