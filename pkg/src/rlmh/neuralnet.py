"""A tiny fully-connected ReLU network with hand-written reverse-mode gradients.

Parameters live in one flat float64 vector so that target-network averaging,
gradient clipping and checkpointing are all plain vector operations. Each
affine layer stores its weight matrix (``in x out``, row-major) followed by
its bias.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InvalidLayout, InvalidParameter, ShapeMismatch
from .numkit import RngStream

Layout = tuple[tuple[int, int], ...]


def _check_layout(layout) -> Layout:
    layout = tuple((int(a), int(b)) for a, b in layout)
    if not layout:
        raise InvalidLayout("layout must have at least one layer")
    for i, (fan_in, fan_out) in enumerate(layout):
        if fan_in < 1 or fan_out < 1:
            raise InvalidLayout(f"layer {i} has non-positive width")
        if i and layout[i - 1][1] != fan_in:
            raise InvalidLayout(f"layer {i} input width {fan_in} != previous output {layout[i - 1][1]}")
    return layout


def mlp_layout(n_in: int, hidden: tuple[int, ...] = (8, 8), n_out: int = 1) -> Layout:
    widths = (n_in, *hidden, n_out)
    return tuple(zip(widths[:-1], widths[1:]))


def n_params(layout) -> int:
    return sum(a * b + b for a, b in _check_layout(layout))


@dataclass
class MlpParams:
    layout: Layout
    flat: np.ndarray

    def __post_init__(self):
        self.layout = _check_layout(self.layout)
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.shape != (n_params(self.layout),):
            raise ShapeMismatch(
                f"layout needs {n_params(self.layout)} parameters, got {self.flat.shape}"
            )

    @property
    def n_in(self) -> int:
        return self.layout[0][0]

    @property
    def n_out(self) -> int:
        return self.layout[-1][1]

    def layers(self):
        """Yield (W, b) views into ``flat``."""
        offset = 0
        for fan_in, fan_out in self.layout:
            w = self.flat[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.flat[offset:offset + fan_out]
            offset += fan_out
            yield w, b

    def copy(self) -> "MlpParams":
        return MlpParams(self.layout, self.flat.copy())

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)[0]


def mlp_init(layout, rng: RngStream) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases alike."""
    layout = _check_layout(layout)
    parts = []
    for fan_in, fan_out in layout:
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.generator.uniform(-bound, bound, size=fan_in * fan_out))
        parts.append(rng.generator.uniform(-bound, bound, size=fan_out))
    return MlpParams(layout, np.concatenate(parts))


@dataclass
class ForwardTape:
    inputs: list[np.ndarray]   # input to each affine layer
    pre: list[np.ndarray]      # pre-activation output of each affine layer


def forward(p: MlpParams, x) -> tuple[np.ndarray, ForwardTape]:
    """Evaluate the network on a batch (rows are samples).

    A 1-D input is treated as a batch of one.
    """
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if h.shape[1] != p.n_in:
        raise DimensionMismatch(f"network expects {p.n_in} inputs, got {h.shape[1]}")
    inputs, pre = [], []
    n_layers = len(p.layout)
    for k, (w, b) in enumerate(p.layers()):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if k < n_layers - 1 else z
    return h, ForwardTape(inputs, pre)


def backward(p: MlpParams, tape: ForwardTape, dy) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of sum(dy * y) with respect to the flat parameters and the input."""
    dy = np.atleast_2d(np.asarray(dy, dtype=np.float64))
    if len(tape.pre) != len(p.layout) or dy.shape != tape.pre[-1].shape:
        raise ShapeMismatch("tape or output gradient does not match the network")
    layers = list(p.layers())
    per_layer = [None] * len(layers)
    g = dy
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        if k < len(layers) - 1:
            g = g * (tape.pre[k] > 0.0)
        per_layer[k] = ((tape.inputs[k].T @ g).ravel(), g.sum(axis=0))
        g = g @ w.T
    flat = np.concatenate([part for pair in per_layer for part in pair])
    return flat, g


def clip_gradient(g: np.ndarray, clip_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(g))
    if norm > clip_norm:
        return g * (clip_norm / norm)
    return g


def apply_update(p: MlpParams, g, lr: float, clip_norm: float) -> MlpParams:
    """``p + lr * clip(g)``; the caller picks the sign (ascent or descent)."""
    if lr < 0:
        raise InvalidParameter("learning rate must be non-negative")
    if clip_norm <= 0:
        raise InvalidParameter("clip_norm must be positive")
    g = np.asarray(g, dtype=np.float64)
    if g.shape != p.flat.shape:
        raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.flat.shape}")
    if lr == 0:
        return p.copy()
    return MlpParams(p.layout, p.flat + lr * clip_gradient(g, clip_norm))


# --- checkpoint format ------------------------------------------------------
# line 1: "layout,<in>x<out>,<in>x<out>,..."
# line 2: comma-separated flat parameters


def dumps_params(p: MlpParams) -> str:
    head = "layout," + ",".join(f"{a}x{b}" for a, b in p.layout)
    body = ",".join(repr(float(v)) for v in p.flat)
    return head + "\n" + body + "\n"


def loads_params(text: str) -> MlpParams:
    lines = [ln for ln in io.StringIO(text).read().splitlines() if ln.strip()]
    if len(lines) != 2 or not lines[0].startswith("layout,"):
        raise InvalidLayout("not a parameter snapshot")
    layout = [tuple(int(v) for v in cell.split("x")) for cell in lines[0].split(",")[1:]]
    flat = np.array([float(v) for v in lines[1].split(",")])
    return MlpParams(layout, flat)


def save_params(p: MlpParams, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_params(p))
    return path


def load_params(path: str | Path) -> MlpParams:
    return loads_params(Path(path).read_text())
