"""Matrix product state models of binary image sets.

A trained state ``psi`` doubles as an exact sampler, a density
``|psi(x)|^2`` for classification, and a probe of the set's geometry
(energies, size, Hamming statistics, effective dimension, entanglement).
"""

from .classify import ClassifierEnsemble, calibrate_threshold, classify, indicator
from .dataio import BinaryImage, Dataset, binarize, load_dataset, load_idx_dataset, save_dataset, split
from .errors import FullSetError, InfeasibleError, InputError, NumericError, ParseError
from .estimators import BornMachine, MPSClassifier
from .mps import MPS, bond_entropies, canonicalize, load, save, schmidt_spectrum
from .sampling import SampleRequest, sample_batch, sample_conditional, sample_one
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "MPS",
    "BinaryImage",
    "BornMachine",
    "ClassifierEnsemble",
    "Dataset",
    "FullSetError",
    "InfeasibleError",
    "InputError",
    "MPSClassifier",
    "NumericError",
    "ParseError",
    "SampleRequest",
    "TrainConfig",
    "binarize",
    "bond_entropies",
    "calibrate_threshold",
    "canonicalize",
    "classify",
    "indicator",
    "load",
    "load_dataset",
    "load_idx_dataset",
    "sample_batch",
    "sample_conditional",
    "sample_one",
    "save",
    "save_dataset",
    "schmidt_spectrum",
    "split",
    "train",
]
