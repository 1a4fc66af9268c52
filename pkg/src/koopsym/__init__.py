"""Koopman operator learning with discrete symmetries.

EDMD fits, observable dictionaries, basin indicators, symmetry-constrained
global predictors and the Duffing / Lorenz benchmark harness.
"""

from koopsym.basin import BasinIndicator, classify, label_by_integration, label_many, train
from koopsym.dynamics import (
    DuffingParams,
    LorenzParams,
    Trajectory,
    check_equivariance,
    duffing_rhs,
    generate_duffing_training_set,
    integrate,
    lorenz_rhs,
    simulate,
    stack_states,
    subsample,
)
from koopsym.edmd import (
    KoopmanModel,
    SnapshotPairs,
    build_snapshot_pairs,
    eigenfunctions,
    fit,
    koopman_modes,
    predict,
    predict_trajectory,
)
from koopsym.errors import (
    DegenerateDictionaryError,
    DimensionError,
    IllConditionedEigenError,
    IntegrationDivergedError,
    UnresolvedBasinError,
)
from koopsym.observables import (
    Dictionary,
    FourierDictionary,
    PolynomialDictionary,
    RBFDictionary,
    default_rbf_width,
    dictionary_from_spec,
    dimension,
    place_rbf_centers,
)
from koopsym.symmetry import (
    GroupAction,
    SymmetryModel,
    augment,
    canonicalize,
    check_commutation,
    compact_duffing_lift,
    stitched_dictionary,
    symmetry_predict,
    symmetry_rollout,
)

__version__ = "0.1.0"
