"""Chromaticity-intensity decomposition and coded-aperture spectral reconstruction."""

from .cube import (
    DEFAULT_EPSILON,
    GuidanceCube,
    IntensityMap,
    SpectralCube,
    decompose,
    expand_rgb_guidance,
    recompose,
    spectral_correlation,
)
from .errors import (
    ChromacubeError,
    ConfigError,
    CubeFormatError,
    DegenerateDataError,
    DivergenceError,
    DivisionHazardError,
    OperatorSizeError,
    ShapeMismatchError,
)
from .metrics import EvalReport, evaluate_cube, psnr, ssim
from .prox import identity_denoise, total_variation, tv_denoise
from .sensing import (
    CodedMask,
    Measurement,
    NoiseModel,
    SensingOperator,
    add_noise,
    apply_adjoint,
    apply_forward,
    build_operator,
    densify,
    gram_diagonal,
    gram_diagonal_plane,
)
from .solver import (
    SolveTrace,
    SolverConfig,
    closed_form_direct,
    default_initial,
    estimate_noise_residual,
    gradient_projection,
    run_hqs,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_EPSILON",
    "ChromacubeError",
    "CodedMask",
    "ConfigError",
    "CubeFormatError",
    "DegenerateDataError",
    "DivergenceError",
    "DivisionHazardError",
    "EvalReport",
    "GuidanceCube",
    "IntensityMap",
    "Measurement",
    "NoiseModel",
    "OperatorSizeError",
    "SensingOperator",
    "ShapeMismatchError",
    "SolveTrace",
    "SolverConfig",
    "SpectralCube",
    "add_noise",
    "apply_adjoint",
    "apply_forward",
    "build_operator",
    "closed_form_direct",
    "decompose",
    "default_initial",
    "densify",
    "estimate_noise_residual",
    "evaluate_cube",
    "expand_rgb_guidance",
    "gradient_projection",
    "gram_diagonal",
    "gram_diagonal_plane",
    "identity_denoise",
    "psnr",
    "recompose",
    "run_hqs",
    "spectral_correlation",
    "ssim",
    "total_variation",
    "tv_denoise",
]
