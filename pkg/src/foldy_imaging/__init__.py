"""Array imaging of point scatterers with full multiple scattering.

The package simulates active-array data with the Foldy-Lax model and inverts
it in two steps: joint-sparse recovery of effective sources, followed by a
closed-form computation of the reflectivities.
"""

from .coherence import CoherenceCurve, planar_coherence_curve, spherical_coherence_curve
from .config import ConfigError, ExperimentConfig
from .experiment import ExperimentReport, ImageGrid, compare_methods, run_experiment
from .forward import (
    FoldyLaxMatrix,
    ResonanceError,
    ResponseMatrix,
    ScattererScene,
    effective_sources,
    multiple_scattering_amount,
    response_matrix,
    solve_exciting_fields,
    synthesize_data,
)
from .geometry import (
    ArrayGeometry,
    ArrayKind,
    DependentSupportError,
    ImageWindow,
    SensingMatrix,
    SingularKernelError,
    build_sensing_matrix,
    exact_recovery_coefficient,
    green_vector,
    mutual_coherence,
)
from .illumination import (
    DataMatrix,
    Illumination,
    build_data_matrix,
    optimal_illuminations,
    point_illumination,
    random_illuminations,
)
from .music import MusicImage, music_image
from .reflectivity import ReflectivityEstimate, exciting_fields_on_support, recover_reflectivities
from .sparse import (
    DivergenceError,
    EffectiveSourceSolution,
    SolverSettings,
    TheoryBounds,
    extract_support,
    gelma_solve,
    jpq_norm,
    theory_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "ArrayKind",
    "CoherenceCurve",
    "ConfigError",
    "DataMatrix",
    "DependentSupportError",
    "DivergenceError",
    "EffectiveSourceSolution",
    "ExperimentConfig",
    "ExperimentReport",
    "FoldyLaxMatrix",
    "Illumination",
    "ImageGrid",
    "ImageWindow",
    "MusicImage",
    "ReflectivityEstimate",
    "ResonanceError",
    "ResponseMatrix",
    "ScattererScene",
    "SensingMatrix",
    "SingularKernelError",
    "SolverSettings",
    "TheoryBounds",
    "build_data_matrix",
    "build_sensing_matrix",
    "compare_methods",
    "effective_sources",
    "exact_recovery_coefficient",
    "exciting_fields_on_support",
    "extract_support",
    "gelma_solve",
    "green_vector",
    "jpq_norm",
    "multiple_scattering_amount",
    "music_image",
    "mutual_coherence",
    "optimal_illuminations",
    "planar_coherence_curve",
    "point_illumination",
    "random_illuminations",
    "recover_reflectivities",
    "response_matrix",
    "run_experiment",
    "solve_exciting_fields",
    "spherical_coherence_curve",
    "synthesize_data",
    "theory_bounds",
]
