"""The descriptor extractor: frozen handcrafted backbone + trainable head.

The backbone turns any image into a fixed 512-dim feature vector (an
8x8 patch grid with 8 statistics per patch). The head is a small MLP
with tanh hidden activations whose output is L2-normalized; both its
forward pass and the exact analytic gradient of a linear functional of
its output are implemented here, so the whole training objective can be
verified against finite differences.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .colorops import LUMA_WEIGHTS
from .dataset import ImageRecord
from .errors import FormatError, ShapeError, TruncatedError
from .imageops import resize_area

RAW_DIM = 512
PATCH_GRID = 8
WORK_SIZE = 64
_HIST_BINS = 4

_MODEL_MAGIC = b"VPRH"
_MODEL_VERSION = 1


def extract_raw(image: ImageRecord) -> np.ndarray:
    """Backbone features: 8x8 patches x {luma mean/std, 2 chroma means,
    4-bin gradient-orientation histogram}, 512 values total.

    Depends only on the pixel content, never on the id or pose.
    """
    return extract_raw_pixels(image.pixels)


def extract_raw_pixels(pixels: np.ndarray) -> np.ndarray:
    img = resize_area(np.asarray(pixels, dtype=np.float64), WORK_SIZE, WORK_SIZE)
    y = img @ LUMA_WEIGHTS
    c1 = img[..., 0] - y  # R - Y
    c2 = img[..., 2] - y  # B - Y

    # 3x3 central-difference gradients; borders carry zero gradient.
    gx = np.zeros_like(y)
    gy = np.zeros_like(y)
    gx[:, 1:-1] = (y[:, 2:] - y[:, :-2]) / 2.0
    gy[1:-1, :] = (y[2:, :] - y[:-2, :]) / 2.0
    mag = np.hypot(gx, gy)
    # Orientation folded to [0, 180), 4 bins of 45 degrees.
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    bins = np.minimum((ang / 45.0).astype(np.int64), _HIST_BINS - 1)

    ps = WORK_SIZE // PATCH_GRID

    def patches(arr: np.ndarray) -> np.ndarray:
        # (8, 8, ps*ps): row-major patch grid, flattened pixels per patch
        return arr.reshape(PATCH_GRID, ps, PATCH_GRID, ps).transpose(0, 2, 1, 3).reshape(
            PATCH_GRID, PATCH_GRID, ps * ps
        )

    yp, mp, bp = patches(y), patches(mag), patches(bins)
    features = np.empty((PATCH_GRID, PATCH_GRID, 8))
    features[..., 0] = yp.mean(axis=-1)
    features[..., 1] = yp.std(axis=-1)
    features[..., 2] = patches(c1).mean(axis=-1)
    features[..., 3] = patches(c2).mean(axis=-1)
    for b in range(_HIST_BINS):
        features[..., 4 + b] = np.sum(mp * (bp == b), axis=-1)
    return features.reshape(RAW_DIM)


@dataclass
class EmbeddingModel:
    """Trainable projection head: affine layers, tanh between, L2-normalized.

    weights[k] has shape (in_k, out_k); biases[k] has shape (out_k,).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def hidden_dims(self) -> list[int]:
        return [w.shape[1] for w in self.weights[:-1]]

    def fingerprint(self) -> bytes:
        """32-byte content hash of all parameters (shape-sensitive)."""
        h = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            h.update(struct.pack("<II", *w.shape))
            h.update(np.ascontiguousarray(w, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return h.digest()

    def fingerprint_hex(self) -> str:
        return self.fingerprint().hex()

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_model(
    hidden_dims: list[int] | None = None,
    output_dim: int = 128,
    seed: int = 0,
    input_dim: int = RAW_DIM,
) -> EmbeddingModel:
    """Seeded initialization: uniform weights scaled 1/sqrt(fan_in), zero bias."""
    if hidden_dims is None:
        hidden_dims = [256]
    dims = [input_dim, *hidden_dims, output_dim]
    if any(d <= 0 for d in dims):
        raise ShapeError(f"all layer dims must be positive, got {dims}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x11A7]))
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EmbeddingModel(weights=weights, biases=biases)


def _forward_trace(
    model: EmbeddingModel, raw: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray], float]:
    """Forward pass keeping layer activations for backprop.

    Returns (descriptor, activations per layer input, guarded norm).
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (model.input_dim,):
        raise ShapeError(
            f"raw features have shape {raw.shape}, model expects ({model.input_dim},)"
        )
    acts = [raw]
    a = raw
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = np.tanh(z) if k < last else z
        acts.append(a)
    norm = float(np.linalg.norm(a))
    if norm < 1e-12:
        norm += 1e-12
    return a / norm, acts, norm


def forward(model: EmbeddingModel, raw: np.ndarray) -> np.ndarray:
    """Unit-norm descriptor for one raw feature vector."""
    f, _, _ = _forward_trace(model, raw)
    return f


def forward_batch(model: EmbeddingModel, raws: np.ndarray) -> np.ndarray:
    """Unit-norm descriptors for an (N, F) matrix of raw features."""
    a = np.asarray(raws, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != model.input_dim:
        raise ShapeError(
            f"raw batch has shape {a.shape}, model expects (N, {model.input_dim})"
        )
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if k < last:
            a = np.tanh(a)
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    norms = np.where(norms < 1e-12, norms + 1e-12, norms)
    return a / norms


@dataclass
class ParamGradients:
    """Per-layer gradients, shapes mirroring the model parameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __iadd__(self, other: "ParamGradients") -> "ParamGradients":
        for w, ow in zip(self.weights, other.weights):
            w += ow
        for b, ob in zip(self.biases, other.biases):
            b += ob
        return self

    def scale(self, factor: float) -> None:
        for w in self.weights:
            w *= factor
        for b in self.biases:
            b *= factor

    @classmethod
    def zeros_like(cls, model: EmbeddingModel) -> "ParamGradients":
        return cls(
            weights=[np.zeros_like(w) for w in model.weights],
            biases=[np.zeros_like(b) for b in model.biases],
        )


def backward(
    model: EmbeddingModel, raw: np.ndarray, upstream: np.ndarray
) -> ParamGradients:
    """Exact gradient of <upstream, forward(model, raw)> w.r.t. parameters.

    Includes the normalization Jacobian (I - f f^T) / ||z||.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (model.output_dim,):
        raise ShapeError(
            f"upstream has shape {upstream.shape}, expected ({model.output_dim},)"
        )
    f, acts, norm = _forward_trace(model, raw)
    g = (upstream - f * float(f @ upstream)) / norm  # through normalization
    grads = ParamGradients.zeros_like(model)
    last = len(model.weights) - 1
    for k in range(last, -1, -1):
        a_in = acts[k]
        grads.weights[k][:] = np.outer(a_in, g)
        grads.biases[k][:] = g
        if k > 0:
            g = model.weights[k] @ g
            g = g * (1.0 - acts[k] ** 2)  # tanh'
    return grads


def apply_gradients(model: EmbeddingModel, grads: ParamGradients, lr: float) -> None:
    """In-place plain gradient-descent step."""
    for w, gw in zip(model.weights, grads.weights):
        w -= lr * gw
    for b, gb in zip(model.biases, grads.biases):
        b -= lr * gb


def save_model(model: EmbeddingModel, path: str | Path) -> None:
    """Binary format: magic, version u16, layer count u32, per-layer dims,
    then all parameters as little-endian float64."""
    parts = [_MODEL_MAGIC, struct.pack("<H", _MODEL_VERSION)]
    parts.append(struct.pack("<I", len(model.weights)))
    for w in model.weights:
        parts.append(struct.pack("<II", *w.shape))
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path: str | Path) -> EmbeddingModel:
    """Inverse of save_model; bit-exact round trip."""
    data = Path(path).read_bytes()
    if data[:4] != _MODEL_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {_MODEL_MAGIC!r}")
    pos = 4
    try:
        (version,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if version != _MODEL_VERSION:
            raise FormatError(f"unsupported model file version {version}")
        (n_layers,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shapes = []
        for _ in range(n_layers):
            shapes.append(struct.unpack_from("<II", data, pos))
            pos += 8
    except struct.error:
        raise TruncatedError(
            f"header truncated at byte {len(data)}"
        ) from None
    expected = pos + sum(8 * (i * o + o) for i, o in shapes)
    if len(data) < expected:
        raise TruncatedError(
            f"expected {expected} bytes, file has only {len(data)}"
        )
    weights, biases = [], []
    for i, o in shapes:
        w = np.frombuffer(data, dtype="<f8", count=i * o, offset=pos).reshape(i, o)
        pos += 8 * i * o
        b = np.frombuffer(data, dtype="<f8", count=o, offset=pos)
        pos += 8 * o
        weights.append(w.copy())
        biases.append(b.copy())
    return EmbeddingModel(weights=weights, biases=biases)
