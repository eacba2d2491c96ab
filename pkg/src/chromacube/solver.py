"""Stage-wise reconstruction under anisotropic Gaussian measurement noise.

Each stage alternates a data step with a proximal denoising step. The
data step exploits the diagonal Gram of the sensing operator: because
``H @ H.T`` is diagonal, the quadratic subproblem's solution

    c = (H' inv(S) H + mu I)^-1 (H' inv(S) y + mu z)

collapses, via the Woodbury identity, to a per-pixel reweighted residual
back-projection

    c = z + H' r,    r_i = (y_i - [Hz]_i) / (h_i + mu * sigma_i^2)

which :func:`gradient_projection` computes matrix-free. The dense route
:func:`closed_form_direct` solves the same subproblem explicitly and is
the oracle the matrix-free path is tested against.

The per-pixel noise map comes either from a fixed scalar or from a
residual-based box-filter estimate standing in for a learned estimator;
the estimate also yields the scalar denoiser strength for the stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cube import SpectralCube
from .errors import ConfigError, DivergenceError, ShapeMismatchError
from .prox import identity_denoise, tv_denoise
from .sensing import (
    Measurement,
    NoiseModel,
    SensingOperator,
    apply_adjoint,
    apply_forward,
    gram_diagonal_plane,
)

DENOISERS = ("identity", "tv")
NOISE_ESTIMATORS = ("fixed", "residual")

#: Residual growth factor that triggers the divergence guard.
DIVERGENCE_FACTOR = 1e3


@dataclass
class SolverConfig:
    """Knobs for :func:`run_hqs`.

    ``mu`` is the quadratic coupling weight of the data step (kept
    explicit, default 1, so the dense oracle equality stays testable);
    ``tau`` multiplies the estimated denoiser strength. ``gram_floor``
    guards divisions at measurement pixels no band reaches.
    """

    stages: int = 10
    mu: float = 1.0
    tau: float = 1.0
    denoiser: str = "tv"
    noise_estimator: str = "fixed"
    fixed_sigma: float = 0.0
    gram_floor: float = 1e-9
    record_trace: bool = True
    noise_window: int = 7
    noise_floor: float = 1e-6
    tv_iters: int = 20

    def __post_init__(self):
        if self.stages < 1:
            raise ConfigError(f"stage count must be >= 1, got {self.stages}")
        if self.mu <= 0:
            raise ConfigError(f"mu must be > 0, got {self.mu}")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.gram_floor <= 0:
            raise ConfigError(f"gram floor must be > 0, got {self.gram_floor}")
        if self.denoiser not in DENOISERS:
            raise ConfigError(f"denoiser must be one of {DENOISERS}, got {self.denoiser!r}")
        if self.noise_estimator not in NOISE_ESTIMATORS:
            raise ConfigError(
                f"noise estimator must be one of {NOISE_ESTIMATORS}, got {self.noise_estimator!r}"
            )
        if self.fixed_sigma < 0:
            raise ConfigError(f"fixed sigma must be >= 0, got {self.fixed_sigma}")


@dataclass
class SolveTrace:
    """Per-stage diagnostics; lists have length = stages run (empty if tracing is off)."""

    residual_norms: list[float] = field(default_factory=list)
    data_norms: list[float] = field(default_factory=list)
    sigma_means: list[float] = field(default_factory=list)
    omegas: list[float] = field(default_factory=list)


def _project(
    z_data: np.ndarray,
    y: np.ndarray,
    hz: np.ndarray,
    gram: np.ndarray,
    sigma_map: np.ndarray,
    mu: float,
    gram_floor: float,
    op: SensingOperator,
) -> np.ndarray:
    denom = np.maximum(gram + mu * sigma_map**2, gram_floor)
    r = (y - hz) / denom
    return z_data + apply_adjoint(op, r).data


def gradient_projection(
    z: SpectralCube,
    y: Measurement,
    op: SensingOperator,
    sigma_map: np.ndarray,
    mu: float,
    gram_floor: float = 1e-9,
) -> SpectralCube:
    """One reweighted residual back-projection (the data step).

    Computes ``z + H'((y - Hz) / (h + mu * sigma^2))`` with the per-pixel
    denominator floored at ``gram_floor``. With ``sigma_map == 0`` and a
    positive Gram diagonal the output reproduces ``y`` exactly under the
    forward model.
    """
    y = np.asarray(y, dtype=np.float64)
    sigma_map = np.asarray(sigma_map, dtype=np.float64)
    if sigma_map.shape != y.shape:
        raise ShapeMismatchError(
            f"sigma map shape {sigma_map.shape} does not match measurement shape {y.shape}"
        )
    hz = apply_forward(op, z)
    gram = gram_diagonal_plane(op)
    data = _project(z.data, y, hz, gram, sigma_map, mu, gram_floor, op)
    return SpectralCube(data)


def closed_form_direct(
    z: SpectralCube,
    y: Measurement,
    dense_h: np.ndarray,
    sigma_map: np.ndarray,
    mu: float,
    sigma_floor: float = 1e-9,
) -> SpectralCube:
    """Dense-oracle data step: explicit solve of the quadratic subproblem.

    Solves ``(H' inv(S) H + mu I) c = H' inv(S) y + mu z`` with
    ``S = diag(sigma^2)``, and cross-checks the Woodbury form

        inv = (1/mu) I - (1/mu^2) H' inv(S + (1/mu) H H') H

    raising if the two disagree. Noise variances are floored at
    ``sigma_floor`` because this route needs an invertible ``S``.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    sigma_sq = np.maximum(np.asarray(sigma_map, dtype=np.float64).ravel() ** 2, sigma_floor)
    m, n = dense_h.shape
    if y.size != m:
        raise ShapeMismatchError(f"measurement has {y.size} entries, dense operator has {m} rows")
    if z.data.size != n:
        raise ShapeMismatchError(f"cube has {z.data.size} entries, dense operator has {n} columns")
    sinv_h = dense_h / sigma_sq[:, None]
    a = dense_h.T @ sinv_h + mu * np.eye(n)
    b = dense_h.T @ (y / sigma_sq) + mu * z.data.ravel()
    c_direct = np.linalg.solve(a, b)

    core = np.diag(sigma_sq) + (dense_h @ dense_h.T) / mu
    inv_smw = np.eye(n) / mu - dense_h.T @ np.linalg.solve(core, dense_h) / mu**2
    c_smw = inv_smw @ b
    scale = max(float(np.linalg.norm(c_direct)), 1e-30)
    if float(np.linalg.norm(c_direct - c_smw)) / scale > 1e-6:
        raise ArithmeticError(
            "direct inverse and Woodbury form disagree; instance is too ill-conditioned"
        )
    return SpectralCube(c_direct.reshape(z.shape))


def _box_mean(img: np.ndarray, window: int) -> np.ndarray:
    """Mean over a window x window neighborhood, truncated at the borders."""
    pad = window // 2
    padded = np.zeros((img.shape[0] + 2 * pad, img.shape[1] + 2 * pad))
    padded[pad : pad + img.shape[0], pad : pad + img.shape[1]] = img
    counts = np.zeros_like(padded)
    counts[pad : pad + img.shape[0], pad : pad + img.shape[1]] = 1.0

    def windowed_sum(a: np.ndarray) -> np.ndarray:
        c = np.cumsum(a, axis=0)
        c = np.vstack([np.zeros((1, a.shape[1])), c])
        rows = c[window:, :] - c[:-window, :]
        c2 = np.cumsum(rows, axis=1)
        c2 = np.hstack([np.zeros((rows.shape[0], 1)), c2])
        return c2[:, window:] - c2[:, :-window]

    return windowed_sum(padded) / windowed_sum(counts)


def estimate_noise_residual(
    z: SpectralCube,
    y: Measurement,
    op: SensingOperator,
    window: int = 7,
    floor: float = 1e-6,
) -> NoiseModel:
    """Residual-based stand-in for a learned noise estimator.

    The squared forward residual ``(y - Hz)^2`` is box-filtered over a
    ``window x window`` neighborhood and floored, giving the per-pixel
    variance map; the denoiser strength is the RMS of that map.
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"window must be odd and >= 1, got {window}")
    if floor <= 0:
        raise ConfigError(f"variance floor must be > 0, got {floor}")
    y = np.asarray(y, dtype=np.float64)
    residual = y - apply_forward(op, z)
    var = np.maximum(_box_mean(residual**2, window), floor)
    return NoiseModel(sigma_map=np.sqrt(var), omega=float(np.sqrt(var.mean())))


def default_initial(y: Measurement, op: SensingOperator, gram_floor: float = 1e-9) -> SpectralCube:
    """Matched-filter start: back-projected measurement, scaled by the peak Gram entry."""
    gram_max = max(float(gram_diagonal_plane(op).max()), gram_floor)
    back = apply_adjoint(op, np.asarray(y, dtype=np.float64))
    return SpectralCube(back.data / gram_max)


def run_hqs(
    y: Measurement,
    op: SensingOperator,
    config: SolverConfig,
    initial: SpectralCube | None = None,
) -> tuple[SpectralCube, SolveTrace]:
    """Run the full stage loop: estimate noise, project, denoise.

    Per stage the noise map and strength come from the configured
    estimator, the iterate is pulled toward data consistency by
    :func:`gradient_projection`, and the configured denoiser is applied
    with strength ``omega * tau``. Deterministic: identical inputs give
    bit-identical outputs and traces.

    Raises:
        DivergenceError: the stage residual exceeded ``1e3 x`` the initial
            residual (measured with an absolute floor so an exact start
            does not trip the guard).
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != op.measurement_shape:
        raise ShapeMismatchError(
            f"measurement shape {y.shape} does not match operator measurement shape "
            f"{op.measurement_shape}"
        )
    z = initial.copy() if initial is not None else default_initial(y, op, config.gram_floor)
    if z.shape != op.scene_shape:
        raise ShapeMismatchError(
            f"initial cube shape {z.shape} does not match scene shape {op.scene_shape}"
        )
    gram = gram_diagonal_plane(op)
    y_norm = float(np.linalg.norm(y))
    trace = SolveTrace()
    limit = None

    for stage in range(config.stages):
        if config.noise_estimator == "fixed":
            sigma_map = np.full(op.measurement_shape, config.fixed_sigma)
            omega = config.fixed_sigma
        else:
            estimate = estimate_noise_residual(z, y, op, config.noise_window, config.noise_floor)
            sigma_map = estimate.sigma_map
            omega = estimate.omega

        hz = apply_forward(op, z)
        residual_norm = float(np.linalg.norm(y - hz))
        if limit is None:
            limit = DIVERGENCE_FACTOR * max(residual_norm, 1e-12 * (1.0 + y_norm))
        elif residual_norm > limit:
            raise DivergenceError(
                f"residual norm {residual_norm:.3e} at stage {stage + 1} exceeds "
                f"{DIVERGENCE_FACTOR:g} x initial; aborting"
            )

        c = SpectralCube(_project(z.data, y, hz, gram, sigma_map, config.mu, config.gram_floor, op))
        strength = omega * config.tau
        if config.denoiser == "tv" and strength > 0:
            z = tv_denoise(c, strength, config.tv_iters)
        else:
            z = identity_denoise(c)

        if config.record_trace:
            trace.residual_norms.append(residual_norm)
            trace.data_norms.append(float(np.linalg.norm(y - apply_forward(op, c))))
            trace.sigma_means.append(float(sigma_map.mean()))
            trace.omegas.append(float(omega))

    return z, trace
