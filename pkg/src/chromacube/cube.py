"""Spectral cube data model and chromaticity-intensity decomposition.

A hyperspectral scene is factored per pixel into a scalar intensity (the
mean over bands) and a chromaticity cube (each band divided by that mean).
The chromaticity is invariant to uniform rescaling of the scene, which is
what makes it a useful reconstruction target: recover chromaticity from a
coded measurement, multiply back by a separately captured intensity image.

Layout convention: cube data is band-major, shape ``(bands, height, width)``
in C order, double precision. Per-band planes are therefore contiguous.
All operations here are pure functions; any internal parallelism must keep
a fixed reduction order so results are bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateDataError, DivisionHazardError, ShapeMismatchError

#: Default denominator guard for :func:`decompose`.
DEFAULT_EPSILON = 1e-6

#: Per-pixel intensity image, shape (height, width), nonnegative float64.
IntensityMap = np.ndarray


@dataclass
class SpectralCube:
    """H x W x N-band radiance/chromaticity volume, band-major in memory.

    ``data`` has shape ``(bands, height, width)`` and dtype float64. Values
    must be finite; physical radiance and chromaticity are nonnegative,
    which callers that need it enforce via :meth:`assert_nonnegative`
    (solver iterates may transiently dip below zero).
    """

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ShapeMismatchError(
                f"cube data must be 3-D (bands, height, width), got shape {self.data.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ConfigError("cube data contains non-finite values")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        """(bands, height, width)."""
        return self.data.shape

    def assert_nonnegative(self) -> "SpectralCube":
        if np.any(self.data < 0):
            lam, u, v = np.unravel_index(int(np.argmin(self.data)), self.data.shape)
            raise ConfigError(
                f"cube has negative value {self.data[lam, u, v]!r} at band {lam}, pixel ({u}, {v})"
            )
        return self

    def copy(self) -> "SpectralCube":
        return SpectralCube(self.data.copy())


@dataclass
class GuidanceCube:
    """Per-band intensity guidance for the sensing operator.

    ``mode`` is ``"pan"`` (one plane shared by every band, stored once) or
    ``"rgb"`` (per-band planes produced by :func:`expand_rgb_guidance`).
    """

    mode: str
    planes: np.ndarray  # pan: (H, W); rgb: (bands, H, W)

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.mode not in ("pan", "rgb"):
            raise ConfigError(f"guidance mode must be 'pan' or 'rgb', got {self.mode!r}")
        expected_ndim = 2 if self.mode == "pan" else 3
        if self.planes.ndim != expected_ndim:
            raise ShapeMismatchError(
                f"{self.mode} guidance needs {expected_ndim}-D planes, got shape {self.planes.shape}"
            )
        if np.any(self.planes < 0) or not np.all(np.isfinite(self.planes)):
            raise ConfigError("guidance values must be finite and >= 0")

    @property
    def height(self) -> int:
        return self.planes.shape[-2]

    @property
    def width(self) -> int:
        return self.planes.shape[-1]

    def band(self, index: int) -> np.ndarray:
        """Guidance plane for one band (the shared plane in pan mode)."""
        if self.mode == "pan":
            return self.planes
        return self.planes[index]

    @staticmethod
    def uniform(height: int, width: int, value: float = 1.0) -> "GuidanceCube":
        """Constant pan guidance (an unguided, plain-mask operator)."""
        return GuidanceCube("pan", np.full((height, width), float(value)))

    @staticmethod
    def from_intensity(intensity: np.ndarray) -> "GuidanceCube":
        return GuidanceCube("pan", np.asarray(intensity, dtype=np.float64))


def decompose(cube: SpectralCube, epsilon: float = DEFAULT_EPSILON) -> tuple[IntensityMap, SpectralCube]:
    """Split a cube into per-pixel intensity and chromaticity.

    Intensity is the mean over bands at each pixel; chromaticity is each
    band divided by ``intensity + epsilon``. With ``epsilon = 0`` the
    split is exactly invertible wherever intensity is positive, and the
    chromaticity of any positively rescaled cube is unchanged.

    Args:
        cube: nonnegative scene cube.
        epsilon: denominator guard, >= 0. Zero is only allowed when every
            pixel has strictly positive intensity.

    Returns:
        ``(intensity, chromaticity)`` with intensity shaped (H, W).

    Raises:
        DivisionHazardError: ``epsilon == 0`` and some pixel has zero
            intensity; the message names the first offending pixel.
    """
    cube.assert_nonnegative()
    if epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    intensity = cube.data.mean(axis=0)
    if epsilon == 0.0:
        zero = intensity == 0.0
        if np.any(zero):
            u, v = np.unravel_index(int(np.argmax(zero)), intensity.shape)
            raise DivisionHazardError(
                f"epsilon=0 with zero intensity at pixel ({u}, {v}); "
                "pass epsilon > 0 or remove zero-energy pixels"
            )
    chroma = cube.data / (intensity + epsilon)
    return intensity, SpectralCube(chroma)


def recompose(chroma: SpectralCube, intensity: IntensityMap) -> SpectralCube:
    """Pixel-wise product of chromaticity and intensity (inverse of decompose at epsilon=0)."""
    intensity = np.asarray(intensity, dtype=np.float64)
    if intensity.shape != (chroma.height, chroma.width):
        raise ShapeMismatchError(
            f"intensity shape {intensity.shape} does not match cube spatial dims "
            f"({chroma.height}, {chroma.width})"
        )
    return SpectralCube(chroma.data * intensity)


def spectral_correlation(cube: SpectralCube) -> np.ndarray:
    """Band-by-band Pearson correlation matrix over all pixels.

    Returns an ``(bands, bands)`` symmetric matrix with unit diagonal.
    Requires at least two bands, each with nonzero variance across pixels.
    """
    if cube.bands < 2:
        raise ConfigError(f"need >= 2 bands for spectral correlation, got {cube.bands}")
    flat = cube.data.reshape(cube.bands, -1)
    centered = flat - flat.mean(axis=1, keepdims=True)
    scale = np.sqrt((centered**2).sum(axis=1))
    degenerate = np.nonzero(scale == 0.0)[0]
    if degenerate.size:
        raise DegenerateDataError(
            f"zero-variance band(s) {degenerate.tolist()}: correlation undefined"
        )
    corr = (centered @ centered.T) / np.outer(scale, scale)
    # Symmetrize rounding noise and pin the diagonal to exactly 1.
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def expand_rgb_guidance(
    rgb: np.ndarray,
    band_centers: np.ndarray,
    anchor_centers: np.ndarray,
) -> GuidanceCube:
    """Interpolate a 3-plane guidance image onto arbitrary band centers.

    Per pixel, the three channel values anchored at ``anchor_centers`` are
    piecewise-linearly interpolated at each entry of ``band_centers``.
    Band centers outside the anchor range are clamped to the nearest
    anchor value (no extrapolation).

    Args:
        rgb: guidance planes shaped (3, H, W).
        band_centers: target spectral coordinates, length = output bands.
        anchor_centers: the 3 channel coordinates, strictly increasing.

    Returns:
        An RGB-mode :class:`GuidanceCube` with one plane per band center.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    band_centers = np.asarray(band_centers, dtype=np.float64)
    anchor_centers = np.asarray(anchor_centers, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ShapeMismatchError(f"rgb guidance must be shaped (3, H, W), got {rgb.shape}")
    if anchor_centers.shape != (3,) or not np.all(np.diff(anchor_centers) > 0):
        raise ConfigError(f"anchor centers must be 3 strictly increasing values, got {anchor_centers}")
    if band_centers.ndim != 1 or band_centers.size == 0:
        raise ConfigError("band_centers must be a non-empty 1-D sequence")
    planes = np.empty((band_centers.size, rgb.shape[1], rgb.shape[2]))
    for i, center in enumerate(band_centers):
        # Clamp t into [0, 1] so centers outside the anchors hold the end value.
        lo = np.searchsorted(anchor_centers, center, side="right") - 1
        lo = min(max(lo, 0), 1)
        t = (center - anchor_centers[lo]) / (anchor_centers[lo + 1] - anchor_centers[lo])
        t = min(max(t, 0.0), 1.0)
        planes[i] = (1.0 - t) * rgb[lo] + t * rgb[lo + 1]
    return GuidanceCube("rgb", planes)
