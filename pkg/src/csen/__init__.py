"""Convolutional sparse support estimation classifiers on feature vectors.

The package covers the whole path from precomputed feature vectors to class
decisions: standardization and PCA projection, class-grouped dictionaries with
a ridge denoiser, representation-based classifiers (CRC, SRC, k-NN), compact
convolutional support estimators trained from scratch, and a stratified
cross-validation harness.
"""

from .config import ExperimentConfig, load_config
from .data import FeatureDataset, generate_synthetic, load_dataset, save_dataset
from .dictionary import Dictionary, build_dictionary, build_layout, proxy
from .errors import (
    CsenError,
    DataError,
    NumericError,
    ParameterError,
    PersistenceError,
    UsageError,
)
from .evaluation import compute_metrics, fit_method, run_experiment, stratified_kfold

__version__ = "0.1.0"
