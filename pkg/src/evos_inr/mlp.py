"""Coordinate MLPs with explicit forward and backward passes.

Two backbones are supported:

* ``siren``: sine activations ``sin(omega * (x W + b))`` with the usual
  SIREN initialization and a linear output layer.
* ``pemlp``: sinusoidal positional encoding followed by ReLU layers and a
  linear output layer.

Weights are stored ``(fan_in, fan_out)`` so a layer is ``h @ W + b``.
Training runs in float32; pass ``dtype=np.float64`` for gradient checks.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .rng import make_rng

BACKBONES = ("siren", "pemlp")


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    output_dim: int
    hidden_layers: int = 3
    hidden_width: int = 256
    backbone: str = "siren"
    omega_first: float = 30.0
    omega_hidden: float = 30.0
    pe_frequencies: int = 10

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("need at least one hidden layer of positive width")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input and output dimensions must be positive")
        if self.backbone == "siren" and (self.omega_first <= 0 or self.omega_hidden <= 0):
            raise ValueError("SIREN frequencies must be positive")
        if self.backbone == "pemlp" and self.pe_frequencies < 0:
            raise ValueError("pe_frequencies must be non-negative")

    @property
    def encoded_dim(self) -> int:
        if self.backbone == "pemlp":
            return self.input_dim * (1 + 2 * self.pe_frequencies)
        return self.input_dim

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.encoded_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


def positional_encoding(coords: np.ndarray, levels: int) -> np.ndarray:
    """``[x, sin(2^j pi x), cos(2^j pi x)]`` for ``j < levels``, axis-interleaved per level."""
    parts = [coords]
    for j in range(levels):
        scaled = (2.0 ** j * math.pi) * coords
        parts.append(np.sin(scaled))
        parts.append(np.cos(scaled))
    return np.concatenate(parts, axis=1)


@dataclass
class ForwardTrace:
    """Per-layer caches from a forward pass, consumed by :meth:`MlpModel.backward`."""

    batch: int
    inputs: list[np.ndarray] = field(default_factory=list)
    # d(activation)/d(pre-activation) per hidden layer
    slopes: list[np.ndarray] = field(default_factory=list)


class MlpModel:
    def __init__(self, config: MlpConfig, weights, biases, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.weights = [np.ascontiguousarray(w, dtype=self.dtype) for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=self.dtype) for b in biases]
        self._workspace: dict = {}
        shapes = [w.shape for w in self.weights]
        if shapes != config.layer_shapes:
            raise ValueError(f"weight shapes {shapes} do not chain as {config.layer_shapes}")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ValueError(f"bias shape {b.shape} does not match weight {w.shape}")

    @classmethod
    def init(cls, config: MlpConfig, seed: int, dtype=np.float32) -> "MlpModel":
        rng = make_rng(seed, stream=0x1217)
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(config.layer_shapes):
            if config.backbone == "siren":
                if i == 0:
                    bound = 1.0 / fan_in
                else:
                    bound = math.sqrt(6.0 / fan_in) / config.omega_hidden
            else:
                bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            b_bound = 1.0 / math.sqrt(fan_in)
            biases.append(rng.uniform(-b_bound, b_bound, size=fan_out))
        return cls(config, weights, biases, dtype=dtype)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]`` of the live parameter arrays."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self, dtype=None) -> "MlpModel":
        return MlpModel(self.config, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], dtype=dtype or self.dtype)

    def _omega(self, layer: int) -> float:
        return self.config.omega_first if layer == 0 else self.config.omega_hidden

    def _buffer(self, key, rows: int, cols: int) -> np.ndarray:
        """Reusable scratch array; grows to the largest batch seen."""
        buf = self._workspace.get(key)
        if buf is None or buf.shape[0] < rows or buf.shape[1] != cols:
            buf = np.empty((rows, cols), dtype=self.dtype)
            self._workspace[key] = buf
        return buf[:rows]

    def forward(self, coords: np.ndarray, keep_trace: bool = False):
        """Predict attributes at ``coords``.

        Returns ``(predictions, trace)``; ``trace`` is None unless
        ``keep_trace`` is set. Without a trace this is a pure function.
        With a trace, activations live in model-owned scratch buffers that
        the next traced forward overwrites.
        """
        coords = np.asarray(coords)
        if coords.ndim != 2 or coords.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected coords of shape (B, {self.config.input_dim}), got {coords.shape}"
            )
        if not np.all(np.isfinite(coords)):
            raise ValueError("non-finite coordinates")
        batch = coords.shape[0]
        h = coords.astype(self.dtype, copy=False)
        if self.config.backbone == "pemlp":
            h = positional_encoding(h, self.config.pe_frequencies).astype(self.dtype, copy=False)
        trace = ForwardTrace(batch=batch) if keep_trace else None
        siren = self.config.backbone == "siren"
        for i in range(self.num_layers - 1):
            w = self.weights[i]
            if trace is None:
                u = h @ w
            else:
                trace.inputs.append(h)
                u = np.matmul(h, w, out=self._buffer(("act", i), batch, w.shape[1]))
            u += self.biases[i]
            if siren:
                omega = self.dtype.type(self._omega(i))
                u *= omega
                if trace is not None:
                    slope = np.cos(u, out=self._buffer(("slope", i), batch, w.shape[1]))
                    slope *= omega
                    trace.slopes.append(slope)
                h = np.sin(u, out=u)
            else:
                if trace is not None:
                    slope = self._buffer(("slope", i), batch, w.shape[1])
                    np.greater(u, 0, out=slope)
                    trace.slopes.append(slope)
                h = np.maximum(u, 0, out=u)
        if trace is not None:
            trace.inputs.append(h)
        out = h @ self.weights[-1]
        out += self.biases[-1]
        return out, trace

    def predict(self, coords: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
        """Trace-free forward in chunks, for full-grid evaluation."""
        parts = [self.forward(coords[s:s + chunk])[0] for s in range(0, len(coords), chunk)]
        return np.concatenate(parts, axis=0)

    def backward(self, trace: ForwardTrace, grad_out: np.ndarray) -> list[np.ndarray]:
        """Reverse-mode gradients of ``sum(predictions * grad_out)``.

        Returns arrays aligned with :meth:`parameters`.
        """
        if trace is None or len(trace.inputs) != self.num_layers:
            raise ValueError("backward needs a trace from forward(keep_trace=True)")
        grad_out = np.asarray(grad_out, dtype=self.dtype)
        if grad_out.shape != (trace.batch, self.config.output_dim):
            raise ValueError(
                f"output gradient shape {grad_out.shape} does not match batch "
                f"({trace.batch}, {self.config.output_dim})"
            )
        grads: list[np.ndarray] = [None] * (2 * self.num_layers)
        delta = grad_out
        for i in range(self.num_layers - 1, -1, -1):
            if i < self.num_layers - 1:
                slope = trace.slopes[i]
                back = self._buffer(("delta", i), trace.batch, slope.shape[1])
                if delta.shape[1] == 1:
                    # rank-1 product; BLAS is slow for an inner dimension of 1
                    np.multiply(delta, self.weights[i + 1].T, out=back)
                else:
                    np.matmul(delta, self.weights[i + 1].T, out=back)
                delta = np.multiply(back, slope, out=back)
            grads[2 * i] = trace.inputs[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
        return grads


class Adam:
    """Adam with bias correction, updating a model's parameters in place."""

    def __init__(self, model: MlpModel, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in model.parameters()]
        self.v = [np.zeros_like(p) for p in model.parameters()]

    def copy(self) -> "Adam":
        other = object.__new__(Adam)
        other.__dict__.update(self.__dict__)
        other.m = [a.copy() for a in self.m]
        other.v = [a.copy() for a in self.v]
        return other

    def step(self, model: MlpModel, grads: list[np.ndarray]) -> None:
        params = model.parameters()
        if len(grads) != len(params):
            raise ValueError("gradient list does not match model parameters")
        for g, p in zip(grads, params):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        step_size = self.lr / bc1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / bc2)
            denom += self.eps
            p -= (step_size * m / denom).astype(p.dtype, copy=False)


CHECKPOINT_MAGIC = b"EVOSMLP\x00"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: MlpModel) -> Path:
    """Little-endian binary checkpoint.

    Layout: 8-byte magic, uint32 version, uint32 header length, UTF-8 JSON
    header (config, dtype, shapes), then each layer's weight and bias in
    declaration order as raw little-endian floats.
    """
    path = Path(path)
    header = json.dumps({
        "config": asdict(model.config),
        "dtype": model.dtype.name,
        "shapes": [list(p.shape) for p in model.parameters()],
    }).encode()
    le = model.dtype.newbyteorder("<")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p, dtype=le).tobytes())
    return path


def load_checkpoint(path) -> MlpModel:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an MLP checkpoint")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen])
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    offset = 16 + hlen
    arrays = []
    for shape in header["shapes"]:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(shape))
        offset += count * dtype.itemsize
    if offset != len(data):
        raise ValueError(f"{path}: trailing or missing bytes in checkpoint")
    config = MlpConfig(**header["config"])
    return MlpModel(config, arrays[0::2], arrays[1::2], dtype=header["dtype"])
