"""Quaternion positional encodings for 1D, 2D and 3D token grids."""

__version__ = "0.1.0"

from .errors import (
    DimensionMismatch,
    EmptyList,
    GeoPEError,
    IndexOutOfRange,
    NonUnitAxis,
    NonUnitRotor,
    ZeroAxis,
)
from .quaternion import (
    IDENTITY,
    axis_angle,
    canonicalize,
    conjugate,
    hamilton_product,
    inverse,
    norm,
    rotation_angle,
    same_rotation,
    sandwich_rotate,
    to_rotation_matrix,
)
from .lie import exp_map, geometric_mean, log_map, mean_lie_vector
from .operators import (
    GeoPEOperator,
    GridPosition,
    PhaseSchedule,
    apply_operator,
    build_1d,
    build_2d,
    build_3d,
    build_operator,
    grid_operators,
    phases,
    rotation_block,
)
from .linear import (
    Displacement,
    DisplacementTable,
    RelativeRotation,
    ScoreDecomposition,
    decompose_score,
    displacement_table,
    relative_lie_vector,
    relative_rotation,
    relative_score,
)
from .attention import (
    AttentionConfig,
    AttentionTrace,
    attention_scores,
    decay_profile,
    encode_qk,
    mean_attention_distance,
    synthetic_qk,
)
