"""Forward-only attention kernels: windowing, sparse channel attention, windowed MSA.

Two branches share one parameter bundle:

  * channel ("spectral") attention treats the C channels at each spatial
    location inside an ``n x n`` window as tokens. Scores are per-row
    top-k sparsified before the softmax, and several sparsity ratios can
    be fused with scalar weights sharing a single Q/K/V computation.
  * spatial attention is a windowed multi-head self-attention block with
    pre-norm residual layout, relative position bias, an optional cyclic
    half-window shift, and a two-layer feed-forward tail.

These kernels exist to make the attention mechanics testable at desk
scale (no training, no gradients). Parameters are plain numpy arrays,
either randomly initialized from a seed or loaded from a bundle: a JSON
manifest naming each tensor plus one cube file per tensor.

Feature maps are ``(height, width, channels)`` float64 arrays with finite
values. All kernels are deterministic given their parameters.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

import numpy as np

from .cube import SpectralCube
from .cubeio import atomic_write_text, cube_read, cube_write
from .errors import ConfigError, CubeFormatError, ShapeMismatchError

#: (height, width, channels) float64 array.
FeatureMap = np.ndarray

LN_EPS = 1e-5


@dataclass
class AttentionParams:
    """Weights for one attention block; unused branch fields stay ``None``.

    Channel branch: ``wq/wk/wv`` map a C-vector to ``C * heads * head_dim``
    embeddings, ``wo`` maps the flattened fused output back to C.
    Spatial branch: ``wq/wk/wv`` are ``(C, heads * head_dim)``, plus layer
    norms, relative position bias table ``((2*window-1)^2, heads)``, and
    FFN weights.
    """

    heads: int
    head_dim: int
    window: int
    shift: int = 0
    wq: np.ndarray | None = None
    wk: np.ndarray | None = None
    wv: np.ndarray | None = None
    wo: np.ndarray | None = None
    bo: np.ndarray | None = None
    ln1_gamma: np.ndarray | None = None
    ln1_beta: np.ndarray | None = None
    ln2_gamma: np.ndarray | None = None
    ln2_beta: np.ndarray | None = None
    ffn_w1: np.ndarray | None = None
    ffn_b1: np.ndarray | None = None
    ffn_w2: np.ndarray | None = None
    ffn_b2: np.ndarray | None = None
    rel_bias: np.ndarray | None = None
    ratio_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.heads < 1 or self.head_dim < 1:
            raise ConfigError("heads and head_dim must be >= 1")
        if self.window < 1:
            raise ConfigError(f"window size must be >= 1, got {self.window}")


def identity_spectral_params(channels: int, window: int) -> AttentionParams:
    """Identity projections at head_dim 1: scores are raw channel outer products."""
    eye = np.eye(channels)
    return AttentionParams(heads=1, head_dim=1, window=window, wq=eye.copy(), wk=eye.copy(),
                           wv=eye.copy(), wo=eye.copy())


def random_spectral_params(
    channels: int, window: int, heads: int = 1, head_dim: int = 4, seed: int = 0
) -> AttentionParams:
    rng = np.random.Generator(np.random.PCG64(seed))
    hd = channels * heads * head_dim
    scale = 1.0 / np.sqrt(channels)
    return AttentionParams(
        heads=heads,
        head_dim=head_dim,
        window=window,
        wq=rng.normal(0, scale, (channels, hd)),
        wk=rng.normal(0, scale, (channels, hd)),
        wv=rng.normal(0, scale, (channels, hd)),
        wo=rng.normal(0, scale, (hd, channels)),
    )


def random_spatial_params(
    channels: int,
    window: int,
    heads: int = 2,
    head_dim: int = 4,
    hidden: int | None = None,
    seed: int = 0,
    zero_weights: bool = False,
) -> AttentionParams:
    """Spatial MSA block parameters; ``zero_weights`` gives the inert (identity) block."""
    rng = np.random.Generator(np.random.PCG64(seed))
    hidden = 2 * channels if hidden is None else hidden
    hd = heads * head_dim
    scale = 0.0 if zero_weights else 1.0 / np.sqrt(channels)

    def w(shape):
        return np.zeros(shape) if zero_weights else rng.normal(0, scale, shape)

    return AttentionParams(
        heads=heads,
        head_dim=head_dim,
        window=window,
        shift=window // 2,
        wq=w((channels, hd)),
        wk=w((channels, hd)),
        wv=w((channels, hd)),
        wo=w((hd, channels)),
        bo=np.zeros(channels),
        ln1_gamma=np.ones(channels),
        ln1_beta=np.zeros(channels),
        ln2_gamma=np.ones(channels),
        ln2_beta=np.zeros(channels),
        ffn_w1=w((channels, hidden)),
        ffn_b1=np.zeros(hidden),
        ffn_w2=w((hidden, channels)),
        ffn_b2=np.zeros(channels),
        rel_bias=np.zeros(((2 * window - 1) ** 2, heads)),
    )


def window_partition(f: FeatureMap, n: int) -> list[np.ndarray]:
    """Split a feature map into row-major ``n x n`` windows, zero-padding ragged edges."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 3:
        raise ShapeMismatchError(f"feature map must be (H, W, C), got shape {f.shape}")
    if n <= 0:
        raise ConfigError(f"window size must be positive, got {n}")
    height, width, channels = f.shape
    ph = (n - height % n) % n
    pw = (n - width % n) % n
    if ph or pw:
        f = np.pad(f, ((0, ph), (0, pw), (0, 0)))
    windows = []
    for top in range(0, f.shape[0], n):
        for left in range(0, f.shape[1], n):
            windows.append(f[top : top + n, left : left + n, :].copy())
    return windows


def window_merge(windows: list[np.ndarray], height: int, width: int) -> FeatureMap:
    """Inverse of :func:`window_partition`: reassemble and crop away padding."""
    if not windows:
        raise ConfigError("cannot merge an empty window list")
    n = windows[0].shape[0]
    channels = windows[0].shape[2]
    grid_h = -(-height // n)
    grid_w = -(-width // n)
    if len(windows) != grid_h * grid_w:
        raise ShapeMismatchError(
            f"{len(windows)} windows cannot tile a {height} x {width} map with window {n}"
        )
    full = np.empty((grid_h * n, grid_w * n, channels))
    for idx, win in enumerate(windows):
        if win.shape != (n, n, channels):
            raise ShapeMismatchError(f"window {idx} has shape {win.shape}, expected {(n, n, channels)}")
        top = (idx // grid_w) * n
        left = (idx % grid_w) * n
        full[top : top + n, left : left + n, :] = win
    return full[:height, :width, :]


def topk_mask(scores: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask keeping the k largest entries of each row (last axis).

    Ties are broken toward the lower channel index, so the retained set at
    ``k`` is always a subset of the set at ``k + 1``.
    """
    channels = scores.shape[-1]
    if not 1 <= k <= channels:
        raise ConfigError(f"k must be in [1, {channels}], got {k}")
    order = np.argsort(-scores, axis=-1, kind="stable")
    mask = np.zeros(scores.shape, dtype=bool)
    np.put_along_axis(mask, order[..., :k], True, axis=-1)
    return mask


def masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row softmax over the masked-in entries; masked-out entries are exactly 0."""
    neg = np.where(mask, scores, -np.inf)
    peak = neg.max(axis=-1, keepdims=True)
    num = np.exp(neg - peak)
    return num / num.sum(axis=-1, keepdims=True)


def _spectral_qkv(window: np.ndarray, params: AttentionParams):
    n, n2, channels = window.shape
    if n != n2:
        raise ShapeMismatchError(f"window must be square, got shape {window.shape}")
    for name in ("wq", "wk", "wv", "wo"):
        if getattr(params, name) is None:
            raise ConfigError(f"channel attention requires parameter {name!r}")
    hd = params.heads * params.head_dim
    if params.wq.shape != (channels, channels * hd):
        raise ShapeMismatchError(
            f"wq shape {params.wq.shape} incompatible with {channels} channels, "
            f"{params.heads} heads of dim {params.head_dim}"
        )
    x = window.reshape(-1, channels)
    shape = (-1, channels, params.heads, params.head_dim)
    q = (x @ params.wq).reshape(shape)
    key = (x @ params.wk).reshape(shape)
    v = (x @ params.wv).reshape(shape)
    scores = np.einsum("lchd,lkhd->lhck", q, key) / np.sqrt(params.head_dim)
    return x, scores, v


def _spectral_out(fused: np.ndarray, window: np.ndarray, params: AttentionParams) -> np.ndarray:
    n, _, channels = window.shape
    flat = fused.transpose(0, 2, 1, 3).reshape(n * n, -1)  # (loc, C*heads*head_dim)
    return (flat @ params.wo).reshape(n, n, channels)


def topk_spectral_attention(window: np.ndarray, params: AttentionParams, k: int) -> np.ndarray:
    """Sparse channel self-attention at every location of one window.

    Per location the ``C x C`` score matrix keeps only the top-k entries
    per row (rest masked to -inf), is row-softmaxed, and weights the value
    embeddings; heads are concatenated and projected back to C channels.
    """
    window = np.asarray(window, dtype=np.float64)
    _, scores, v = _spectral_qkv(window, params)
    attn = masked_softmax(scores, topk_mask(scores, k))
    fused = np.einsum("lhck,lkhd->lchd", attn, v)
    return _spectral_out(fused, window, params)


def multi_ratio_attention(
    window: np.ndarray,
    params: AttentionParams,
    ratios: list[float],
    weights: list[float] | None = None,
) -> np.ndarray:
    """Fuse channel attention at several sparsity ratios, sharing one Q/K/V.

    Ratio ``r`` keeps ``ceil(r * C)`` entries per row; the per-ratio
    attention outputs are combined with the scalar ``weights`` (default:
    ``params.ratio_weights``) before the output projection.
    """
    window = np.asarray(window, dtype=np.float64)
    if weights is None:
        if params.ratio_weights is None:
            raise ConfigError("no fusion weights: pass weights or set params.ratio_weights")
        weights = list(np.asarray(params.ratio_weights, dtype=np.float64))
    if len(ratios) != len(weights):
        raise ConfigError(f"{len(ratios)} ratios but {len(weights)} weights")
    if not ratios:
        raise ConfigError("need at least one ratio")
    channels = window.shape[2]
    _, scores, v = _spectral_qkv(window, params)
    fused = np.zeros((window.shape[0] * window.shape[1], channels, params.heads, params.head_dim))
    for ratio, weight in zip(ratios, weights):
        if not 0 < ratio <= 1:
            raise ConfigError(f"ratios must lie in (0, 1], got {ratio}")
        k = int(np.ceil(ratio * channels))
        attn = masked_softmax(scores, topk_mask(scores, k))
        fused += weight * np.einsum("lhck,lkhd->lchd", attn, v)
    return _spectral_out(fused, window, params)


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + LN_EPS) * gamma + beta


def _gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation; exact erf form not needed for these reference kernels
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def _relative_bias_matrix(params: AttentionParams) -> np.ndarray:
    """(heads, M^2, M^2) bias from the (2M-1)^2-entry table."""
    m = params.window
    coords = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij"), axis=-1).reshape(-1, 2)
    rel = coords[:, None, :] - coords[None, :, :] + (m - 1)
    index = rel[..., 0] * (2 * m - 1) + rel[..., 1]
    return params.rel_bias[index].transpose(2, 0, 1)


def _msa_block(tokens: np.ndarray, params: AttentionParams, bias: np.ndarray) -> np.ndarray:
    t = _layer_norm(tokens, params.ln1_gamma, params.ln1_beta)
    shape = (-1, params.heads, params.head_dim)
    q = (t @ params.wq).reshape(shape)
    key = (t @ params.wk).reshape(shape)
    v = (t @ params.wv).reshape(shape)
    scores = np.einsum("ihd,jhd->hij", q, key) / np.sqrt(params.head_dim) + bias
    attn = masked_softmax(scores, np.ones(scores.shape, dtype=bool))
    out = np.einsum("hij,jhd->ihd", attn, v).reshape(tokens.shape[0], -1)
    z_spa = out @ params.wo + params.bo + tokens
    t2 = _layer_norm(z_spa, params.ln2_gamma, params.ln2_beta)
    ffn = _gelu(t2 @ params.ffn_w1 + params.ffn_b1) @ params.ffn_w2 + params.ffn_b2
    return ffn + z_spa


def window_msa(f: FeatureMap, params: AttentionParams, shifted: bool = False) -> FeatureMap:
    """Windowed multi-head self-attention block with residual + FFN tail.

    Applies ``out = x + MSA(LN(x))`` then ``out = out + FFN(LN(out))``
    inside each window; with ``shifted`` the map is cyclically rolled by
    half a window before partitioning and rolled back after. With all
    projection and FFN weights (and biases) zero the block is an exact
    identity.
    """
    f = np.asarray(f, dtype=np.float64)
    required = ("wq", "wk", "wv", "wo", "bo", "ln1_gamma", "ln1_beta", "ln2_gamma",
                "ln2_beta", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2", "rel_bias")
    for name in required:
        if getattr(params, name) is None:
            raise ConfigError(f"spatial attention requires parameter {name!r}")
    height, width, channels = f.shape
    hd = params.heads * params.head_dim
    if params.wq.shape != (channels, hd):
        raise ShapeMismatchError(
            f"wq shape {params.wq.shape} incompatible with {channels} channels and "
            f"{params.heads} heads of dim {params.head_dim}"
        )
    m = params.window
    offset = params.shift if params.shift else m // 2
    work = np.roll(f, (-offset, -offset), axis=(0, 1)) if shifted else f
    bias = _relative_bias_matrix(params)
    processed = []
    for win in window_partition(work, m):
        tokens = win.reshape(m * m, channels)
        processed.append(_msa_block(tokens, params, bias).reshape(m, m, channels))
    merged = window_merge(processed, height, width)
    return np.roll(merged, (offset, offset), axis=(0, 1)) if shifted else merged


# ---------------------------------------------------------------------------
# Parameter bundles: JSON manifest + one cube file per tensor.

_SCALAR_FIELDS = ("heads", "head_dim", "window", "shift")


def save_attention_params(params: AttentionParams, directory: str) -> None:
    """Write a parameter bundle; tensors go to float32 cube files."""
    os.makedirs(directory, exist_ok=True)
    manifest: dict = {"scalars": {name: getattr(params, name) for name in _SCALAR_FIELDS},
                      "tensors": {}}
    for f in fields(AttentionParams):
        if f.name in _SCALAR_FIELDS:
            continue
        value = getattr(params, f.name)
        if value is None:
            continue
        arr = np.asarray(value, dtype=np.float64)
        filename = f"{f.name}.cidc"
        padded = arr.reshape((1,) * (3 - arr.ndim) + arr.shape)
        cube_write(SpectralCube(padded), os.path.join(directory, filename))
        manifest["tensors"][f.name] = {"file": filename, "shape": list(arr.shape)}
    atomic_write_text(os.path.join(directory, "manifest.json"), json.dumps(manifest, indent=2))


def load_attention_params(directory: str) -> AttentionParams:
    """Read a bundle written by :func:`save_attention_params`."""
    path = os.path.join(directory, "manifest.json")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
    except json.JSONDecodeError as err:
        raise CubeFormatError(f"{path}: manifest is not valid JSON: {err}") from None
    kwargs = dict(manifest["scalars"])
    for name, entry in manifest["tensors"].items():
        cube = cube_read(os.path.join(directory, entry["file"]))
        kwargs[name] = cube.data.reshape(entry["shape"])
    return AttentionParams(**kwargs)
