"""Dual-camera coded-aperture sensing operator and its dense oracle.

The forward model modulates each band of a (chromaticity) cube by an
effective mask, shears band ``lam`` by ``d * lam`` pixels along the
dispersion axis (band 0 is the unshifted reference), and sums bands onto
a single measurement plane. The effective mask is the physical coded
mask times the per-band guidance plane, so supplying the scene's true
intensity as guidance folds the known illumination into the operator.

Conventions, fixed here and relied on by every oracle test:
  * dispersion shifts in the positive index direction, so the measurement
    extends the scene by ``d * (bands - 1)`` pixels along the axis;
  * cube vectorization is C order over (band, row, col); measurement
    vectorization is C order over (row, col);
  * band loops run in ascending order, giving bit-identical sums at any
    thread count.

Each cube voxel lands on exactly one measurement pixel, so rows of the
dense matrix have disjoint support and ``H @ H.T`` is exactly diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cube import GuidanceCube, SpectralCube
from .errors import ConfigError, OperatorSizeError, ShapeMismatchError

#: Dispersion-extended sensor image, shape (meas_height, meas_width), float64.
#: Values may be negative once noise is added.
Measurement = np.ndarray

AXES = ("h", "v")

#: Default cap on each side of the dense matrix built by :func:`densify`.
DENSIFY_CAP = 65_536


@dataclass
class CodedMask:
    """Physical coded aperture; values in [0, 1], binary or graded."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeMismatchError(f"mask must be 2-D, got shape {self.values.shape}")
        if np.any(self.values < 0) or np.any(self.values > 1) or not np.all(np.isfinite(self.values)):
            raise ConfigError("mask values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class NoiseModel:
    """Per-measurement-pixel noise standard deviations plus a scalar denoiser strength."""

    sigma_map: np.ndarray
    omega: float = 0.0

    def __post_init__(self):
        self.sigma_map = np.asarray(self.sigma_map, dtype=np.float64)
        if np.any(self.sigma_map < 0) or not np.all(np.isfinite(self.sigma_map)):
            raise ConfigError("sigma map must be finite and >= 0")
        if self.omega < 0:
            raise ConfigError(f"omega must be >= 0, got {self.omega}")


@dataclass
class SensingOperator:
    """Matrix-free forward operator for one mask/guidance/dispersion setup.

    Immutable after construction; build via :func:`build_operator`.
    """

    mask: CodedMask
    guidance: GuidanceCube
    shift_step: int
    axis: str
    bands: int
    ref_band: int = 0
    _eff: np.ndarray = field(init=False, repr=False)  # pan: (H, W); rgb: (bands, H, W)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.shift_step < 0:
            raise ConfigError(f"shift step must be >= 0, got {self.shift_step}")
        if self.bands < 1:
            raise ConfigError(f"band count must be >= 1, got {self.bands}")
        if self.ref_band != 0:
            raise ConfigError("reference band is fixed to 0 (first band unshifted)")
        if (self.guidance.height, self.guidance.width) != (self.mask.height, self.mask.width):
            raise ShapeMismatchError(
                f"guidance dims ({self.guidance.height}, {self.guidance.width}) do not match "
                f"mask dims ({self.mask.height}, {self.mask.width})"
            )
        if self.guidance.mode == "rgb" and self.guidance.planes.shape[0] != self.bands:
            raise ShapeMismatchError(
                f"rgb guidance has {self.guidance.planes.shape[0]} planes for {self.bands} bands"
            )
        self._eff = self.guidance.planes * self.mask.values

    @property
    def height(self) -> int:
        return self.mask.height

    @property
    def width(self) -> int:
        return self.mask.width

    @property
    def scene_shape(self) -> tuple[int, int, int]:
        return (self.bands, self.height, self.width)

    @property
    def measurement_shape(self) -> tuple[int, int]:
        """Scene extent plus ``d * (bands - 1)`` along the dispersion axis."""
        extra = self.shift_step * (self.bands - 1)
        if self.axis == "h":
            return (self.height, self.width + extra)
        return (self.height + extra, self.width)

    def effective_mask(self, band: int) -> np.ndarray:
        """Guidance-modulated mask plane for one band."""
        if self.guidance.mode == "pan":
            return self._eff
        return self._eff[band]


def build_operator(
    mask: CodedMask,
    guidance: GuidanceCube,
    shift_step: int,
    axis: str,
    bands: int,
) -> SensingOperator:
    """Assemble a sensing operator, validating dimension consistency."""
    return SensingOperator(mask=mask, guidance=guidance, shift_step=shift_step, axis=axis, bands=bands)


def _check_scene(op: SensingOperator, cube: SpectralCube) -> None:
    if cube.shape != op.scene_shape:
        raise ShapeMismatchError(
            f"cube shape {cube.shape} does not match operator scene shape {op.scene_shape}"
        )


def _check_measurement(op: SensingOperator, y: np.ndarray) -> None:
    if y.shape != op.measurement_shape:
        raise ShapeMismatchError(
            f"measurement shape {y.shape} does not match operator measurement shape "
            f"{op.measurement_shape}"
        )


def apply_forward(op: SensingOperator, cube: SpectralCube) -> Measurement:
    """Mask, shear, and sum a cube onto the measurement plane."""
    _check_scene(op, cube)
    y = np.zeros(op.measurement_shape)
    for lam in range(op.bands):
        s = op.shift_step * (lam - op.ref_band)
        plane = op.effective_mask(lam) * cube.data[lam]
        if op.axis == "h":
            y[:, s : s + op.width] += plane
        else:
            y[s : s + op.height, :] += plane
    return y


def apply_adjoint(op: SensingOperator, y: Measurement) -> SpectralCube:
    """Exact adjoint of :func:`apply_forward`: gather each band's shifted window, re-mask."""
    y = np.asarray(y, dtype=np.float64)
    _check_measurement(op, y)
    out = np.empty(op.scene_shape)
    for lam in range(op.bands):
        s = op.shift_step * (lam - op.ref_band)
        if op.axis == "h":
            window = y[:, s : s + op.width]
        else:
            window = y[s : s + op.height, :]
        out[lam] = op.effective_mask(lam) * window
    return SpectralCube(out)


def gram_diagonal(op: SensingOperator) -> np.ndarray:
    """Diagonal of ``H @ H.T`` as a vector over measurement pixels (C order).

    Entry ``i`` is the sum over bands of the squared effective-mask value
    at the source voxel feeding measurement pixel ``i``; pixels no band
    reaches get 0.
    """
    return gram_diagonal_plane(op).ravel()


def gram_diagonal_plane(op: SensingOperator) -> np.ndarray:
    """Same as :func:`gram_diagonal` but shaped like the measurement."""
    h = np.zeros(op.measurement_shape)
    for lam in range(op.bands):
        s = op.shift_step * (lam - op.ref_band)
        sq = op.effective_mask(lam) ** 2
        if op.axis == "h":
            h[:, s : s + op.width] += sq
        else:
            h[s : s + op.height, :] += sq
    return h


def densify(op: SensingOperator, cap: int = DENSIFY_CAP) -> np.ndarray:
    """Materialize the operator as a dense (M, N) matrix by basis probing.

    Column ``j`` is the forward image of the ``j``-th standard basis cube
    (band-major C-order vectorization), so this is the defining oracle for
    the matrix-free paths. Refuses instances with more than ``cap`` rows
    or columns to avoid accidental quadratic blowups.
    """
    n = op.bands * op.height * op.width
    m = int(np.prod(op.measurement_shape))
    if n > cap or m > cap:
        raise OperatorSizeError(
            f"dense operator would be {m} x {n}, above cap {cap}; "
            "raise the cap explicitly for larger oracles"
        )
    dense = np.zeros((m, n))
    basis = np.zeros(op.scene_shape)
    flat = basis.ravel()
    for j in range(n):
        flat[j] = 1.0
        dense[:, j] = apply_forward(op, SpectralCube(basis)).ravel()
        flat[j] = 0.0
    return dense


def add_noise(y: Measurement, noise: NoiseModel, seed: int) -> Measurement:
    """Add zero-mean Gaussian noise with per-pixel standard deviations.

    Draws come from NumPy's PCG64 generator seeded with ``seed``, so the
    same seed always reproduces the same measurement bit for bit.
    """
    y = np.asarray(y, dtype=np.float64)
    if noise.sigma_map.shape != y.shape:
        raise ShapeMismatchError(
            f"sigma map shape {noise.sigma_map.shape} does not match measurement shape {y.shape}"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    return y + rng.standard_normal(y.shape) * noise.sigma_map
