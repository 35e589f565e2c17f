#!/usr/bin/env python3

"""
nnkernel.py: Minimal dense neural-network kernel with reverse-mode gradients.

Layers keep their parameters in a shared ``ParamStore`` and expose an explicit
``forward`` returning ``(output, cache)`` and a ``backward`` consuming the
cache, accumulating parameter gradients into the store and returning the
gradient with respect to the layer input. Tensors are plain 2-D numpy arrays
with the batch on the first axis.

Mathematical Framework:
    linear:      y = x W + b
    leaky_relu:  y = x if x > 0 else 0.01 x
    GRU cell:    r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
                 z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
                 n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
                 h' = (1 - z) * n + z * h
    Gaussian:    log p(a) = sum_i [-(a_i - mu_i)^2 / (2 sigma_i^2) - log sigma_i - log(2 pi) / 2]
    Adam:        m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
                 theta -= lr * m_hat / (sqrt(v_hat) + eps)

Checkpoint file layout (little-endian):
    u32 tensor count, then per tensor: u32 name length, UTF-8 name,
    u32 ndim, u32 dims[ndim], f32 data (row-major).
    A JSON manifest with the architecture and its hash sits next to it.
"""

__author__ = "RoverNav Developers"
__copyright__ = "Copyright 2026, RoverNav Developers"
__credits__ = ["RoverNav Developers"]
__license__ = "CC BY-NC-SA 4.0"
__version__ = "1.0.0"
__maintainer__ = "RoverNav Developers"
__status__ = "Development"
__date__ = '17.10.2026'
__url__ = "https://github.com/rovernav/rovernav"

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from . import helper as hlp

logger = hlp.setup_logger(__name__)

LEAKY_SLOPE = 0.01
ACTIVATIONS = ('leaky_relu', 'sigmoid', 'tanh')
LOG_2PI = math.log(2.0 * math.pi)
MANIFEST_SUFFIX = '.json'


class CheckpointMismatchError(ValueError):
    """Raised when a checkpoint does not fit the requested architecture or pattern."""


# ---------------------------------------------------------------------------
# Elementwise ops
# ---------------------------------------------------------------------------

def activation(kind: str, x: np.ndarray) -> np.ndarray:
    """Apply an elementwise activation (``leaky_relu``, ``sigmoid`` or ``tanh``)."""
    if kind == 'leaky_relu':
        return np.where(x > 0, x, LEAKY_SLOPE * x)
    if kind == 'sigmoid':
        return expit(x)
    if kind == 'tanh':
        return np.tanh(x)
    raise ValueError(f"Unknown activation '{kind}'. Available: {ACTIVATIONS}")


def activation_backward(kind: str, x: np.ndarray, y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient of an activation given its input ``x``, output ``y`` and upstream ``dy``."""
    if kind == 'leaky_relu':
        return np.where(x > 0, dy, LEAKY_SLOPE * dy)
    if kind == 'sigmoid':
        return dy * y * (1.0 - y)
    if kind == 'tanh':
        return dy * (1.0 - y * y)
    raise ValueError(f"Unknown activation '{kind}'. Available: {ACTIVATIONS}")


def linear(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x W + b for x of shape (B, in), W (in, out), b (out,)."""
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ValueError(f"Shape mismatch in linear: x {x.shape}, W {W.shape}, b {b.shape}")
    return x @ W + b


def linear_backward(dy: np.ndarray, x: np.ndarray, W: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dW, db) of y = x W + b."""
    if dy.shape != (x.shape[0], W.shape[1]):
        raise ValueError(f"Shape mismatch in linear backward: dy {dy.shape}, x {x.shape}, W {W.shape}")
    return dy @ W.T, x.T @ dy, dy.sum(axis=0)


def orthogonal_init(shape: Tuple[int, int], gain: float, rng: np.random.Generator,
                    dtype=np.float64) -> np.ndarray:
    """Scaled (semi-)orthogonal matrix from the QR decomposition of a Gaussian matrix."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(dtype)


# ---------------------------------------------------------------------------
# Parameter storage
# ---------------------------------------------------------------------------

class ParamStore:
    """
    Named parameters with gradient accumulators and Adam moments.

    Values are updated in place so layers can hold on to names only.
    """

    def __init__(self, dtype=np.float32, check_finite: bool = False):
        self.dtype = np.dtype(dtype)
        self.check_finite = check_finite
        self.values: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step = 0
        self.has_grads = False

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __len__(self) -> int:
        return len(self.values)

    @property
    def names(self) -> List[str]:
        return list(self.values.keys())

    @property
    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.values:
            raise ValueError(f"Parameter '{name}' already exists")
        value = np.array(value, dtype=self.dtype)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return value

    def get(self, name: str) -> np.ndarray:
        return self.values[name]

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        if grad.shape != self.grads[name].shape:
            raise ValueError(f"Gradient shape {grad.shape} does not match parameter '{name}' "
                             f"{self.grads[name].shape}")
        if self.check_finite and not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"Non-finite gradient for parameter '{name}'")
        self.grads[name] += grad
        self.has_grads = True

    def zero_grad(self) -> None:
        for grad in self.grads.values():
            grad.fill(0.0)
        self.has_grads = False

    def grad_norm(self, names: Optional[Sequence[str]] = None) -> float:
        names = self.names if names is None else names
        return float(math.sqrt(sum(float(np.sum(np.square(self.grads[n], dtype=np.float64))) for n in names)))

    def clip_grad_norm(self, max_norm: float) -> float:
        """Scale all gradients so their global norm is at most ``max_norm``; returns the norm before clipping."""
        norm = self.grad_norm()
        if max_norm > 0 and norm > max_norm:
            scale = max_norm / (norm + 1e-12)
            for grad in self.grads.values():
                grad *= scale
        return norm

    def shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        return [(name, tuple(value.shape)) for name, value in self.values.items()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.values.items()}

    def load_state_dict(self, tensors: Mapping[str, np.ndarray], strict: bool = True,
                        prefix_map: Optional[Mapping[str, str]] = None) -> List[str]:
        """
        Copy tensors into the store in place.

        Args:
            tensors: Mapping name -> array
            strict: Require the exact same parameter set
            prefix_map: Optional renaming {source prefix: target prefix}

        Returns:
            Names of the parameters that were loaded
        """
        renamed: Dict[str, np.ndarray] = {}
        for name, value in tensors.items():
            target = name
            for src, dst in (prefix_map or {}).items():
                if name.startswith(src):
                    target = dst + name[len(src):]
            renamed[target] = value

        if strict and set(renamed) != set(self.values):
            missing = sorted(set(self.values) - set(renamed))
            unexpected = sorted(set(renamed) - set(self.values))
            raise CheckpointMismatchError(f"Parameter set mismatch; missing={missing[:5]}, "
                                          f"unexpected={unexpected[:5]}")
        loaded = []
        for name, value in renamed.items():
            if name not in self.values:
                continue
            if tuple(value.shape) != self.values[name].shape:
                raise CheckpointMismatchError(f"Shape mismatch for '{name}': checkpoint {tuple(value.shape)}, "
                                              f"model {self.values[name].shape}")
            self.values[name][...] = value
            loaded.append(name)
        return loaded

    def check(self, label: str, array: np.ndarray) -> np.ndarray:
        """In NaN check mode, raise if ``array`` has non-finite entries."""
        if self.check_finite and not np.all(np.isfinite(array)):
            raise FloatingPointError(f"Non-finite values in '{label}'")
        return array


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

class Linear:
    """Affine layer with parameters ``<name>.weight`` (in, out) and ``<name>.bias`` (out,)."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator, gain: float = 1.0):
        self.store = store
        self.name = name
        self.in_dim, self.out_dim = in_dim, out_dim
        self.w_name, self.b_name = f"{name}.weight", f"{name}.bias"
        store.add(self.w_name, orthogonal_init((in_dim, out_dim), gain, rng))
        store.add(self.b_name, np.zeros(out_dim))

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        y = linear(x, self.store.values[self.w_name], self.store.values[self.b_name])
        return self.store.check(self.name, y), x

    def backward(self, dy: np.ndarray, cache: np.ndarray) -> np.ndarray:
        dx, dW, db = linear_backward(dy, cache, self.store.values[self.w_name])
        self.store.accumulate(self.w_name, dW)
        self.store.accumulate(self.b_name, db)
        return dx


class Mlp:
    """
    Stack of linear layers with an activation after every hidden layer and an
    optional activation on the output.
    """

    def __init__(self, store: ParamStore, name: str, sizes: Sequence[int], rng: np.random.Generator,
                 hidden_activation: str = 'leaky_relu', output_activation: Optional[str] = None):
        if len(sizes) < 2:
            raise ValueError(f"An MLP needs at least input and output sizes, got {sizes}")
        self.sizes = tuple(int(s) for s in sizes)
        n = len(sizes) - 1
        self.activations: List[Optional[str]] = [hidden_activation] * (n - 1) + [output_activation]
        self.layers = [Linear(store, f"{name}.{i}", sizes[i], sizes[i + 1], rng,
                              gain=math.sqrt(2.0) if self.activations[i] == 'leaky_relu' else 1.0)
                       for i in range(n)]

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, List[Tuple[Any, np.ndarray, np.ndarray]]]:
        caches = []
        for layer, act in zip(self.layers, self.activations):
            pre, lin_cache = layer.forward(x)
            x = activation(act, pre) if act else pre
            caches.append((lin_cache, pre, x))
        return x, caches

    def backward(self, dy: np.ndarray, caches) -> np.ndarray:
        for layer, act, (lin_cache, pre, post) in zip(reversed(self.layers), reversed(self.activations),
                                                      reversed(caches)):
            if act:
                dy = activation_backward(act, pre, post, dy)
            dy = layer.backward(dy, lin_cache)
        return dy


@dataclass
class GruCellParams:
    """
    GRU parameters with the gates stacked as [reset, update, candidate].

    weight_ih: (input, 3H); weight_hh: (H, 3H); bias_ih, bias_hh: (3H,)
    """
    weight_ih: np.ndarray
    weight_hh: np.ndarray
    bias_ih: np.ndarray
    bias_hh: np.ndarray

    def __post_init__(self):
        h3 = self.weight_hh.shape[1]
        if h3 % 3 or self.weight_hh.shape[0] * 3 != h3 or self.weight_ih.shape[1] != h3 \
                or self.bias_ih.shape != (h3,) or self.bias_hh.shape != (h3,):
            raise ValueError(f"Inconsistent GRU parameter shapes: W_ih {self.weight_ih.shape}, "
                             f"W_hh {self.weight_hh.shape}, b_ih {self.bias_ih.shape}, b_hh {self.bias_hh.shape}")

    @property
    def hidden_size(self) -> int:
        return self.weight_hh.shape[0]

    @property
    def input_size(self) -> int:
        return self.weight_ih.shape[0]


def gru_cell(x: np.ndarray, h: np.ndarray, p: GruCellParams) -> Tuple[np.ndarray, Tuple]:
    """One GRU step; returns the new hidden state and the cache for backward."""
    H = p.hidden_size
    if x.ndim != 2 or x.shape[1] != p.input_size or h.shape != (x.shape[0], H):
        raise ValueError(f"Shape mismatch in gru_cell: x {x.shape}, h {h.shape}, hidden {H}")
    gi = x @ p.weight_ih + p.bias_ih
    gh = h @ p.weight_hh + p.bias_hh
    r = expit(gi[:, :H] + gh[:, :H])
    z = expit(gi[:, H:2 * H] + gh[:, H:2 * H])
    ghn = gh[:, 2 * H:]
    n = np.tanh(gi[:, 2 * H:] + r * ghn)
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, r, z, n, ghn)


def gru_cell_backward(dh_new: np.ndarray, cache: Tuple, p: GruCellParams
                      ) -> Tuple[np.ndarray, np.ndarray, GruCellParams]:
    """Gradients of one GRU step: (dx, dh_prev, parameter gradients)."""
    x, h, r, z, n, ghn = cache
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z

    dn_pre = dn * (1.0 - n * n)
    dr = dn_pre * ghn
    dr_pre = dr * r * (1.0 - r)
    dz_pre = dz * z * (1.0 - z)

    dgi = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
    dgh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)

    dx = dgi @ p.weight_ih.T
    dh = dh + dgh @ p.weight_hh.T
    grads = GruCellParams(weight_ih=x.T @ dgi, weight_hh=h.T @ dgh,
                          bias_ih=dgi.sum(axis=0), bias_hh=dgh.sum(axis=0))
    return dx, dh, grads


class GruCell:
    """GRU cell whose parameters live in a ParamStore."""

    def __init__(self, store: ParamStore, name: str, input_size: int, hidden_size: int,
                 rng: np.random.Generator):
        self.store = store
        self.name = name
        self.input_size, self.hidden_size = input_size, hidden_size
        self.keys = tuple(f"{name}.{k}" for k in ('weight_ih', 'weight_hh', 'bias_ih', 'bias_hh'))
        store.add(self.keys[0], np.concatenate(
            [orthogonal_init((input_size, hidden_size), 1.0, rng) for _ in range(3)], axis=1))
        store.add(self.keys[1], np.concatenate(
            [orthogonal_init((hidden_size, hidden_size), 1.0, rng) for _ in range(3)], axis=1))
        store.add(self.keys[2], np.zeros(3 * hidden_size))
        store.add(self.keys[3], np.zeros(3 * hidden_size))

    def params(self) -> GruCellParams:
        return GruCellParams(*(self.store.values[k] for k in self.keys))

    def forward(self, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, Tuple]:
        h_new, cache = gru_cell(x, h, self.params())
        return self.store.check(self.name, h_new), cache

    def backward(self, dh_new: np.ndarray, cache: Tuple) -> Tuple[np.ndarray, np.ndarray]:
        dx, dh, grads = gru_cell_backward(dh_new, cache, self.params())
        for key, grad in zip(self.keys, (grads.weight_ih, grads.weight_hh, grads.bias_ih, grads.bias_hh)):
            self.store.accumulate(key, grad)
        return dx, dh


class Gru:
    """Stacked GRU; layer l > 0 consumes the hidden state of layer l - 1."""

    def __init__(self, store: ParamStore, name: str, input_size: int, hidden_size: int,
                 num_layers: int, rng: np.random.Generator):
        if num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {num_layers}")
        self.store = store
        self.hidden_size = hidden_size
        self.cells = [GruCell(store, f"{name}.layer{l}", input_size if l == 0 else hidden_size,
                              hidden_size, rng) for l in range(num_layers)]

    @property
    def num_layers(self) -> int:
        return len(self.cells)

    def initial_state(self, batch: int) -> List[np.ndarray]:
        return [np.zeros((batch, self.hidden_size), dtype=self.store.dtype) for _ in self.cells]

    def step(self, x: np.ndarray, hidden: Sequence[np.ndarray]) -> Tuple[np.ndarray, List[np.ndarray], List]:
        new_hidden, caches = [], []
        for cell, h in zip(self.cells, hidden):
            x, cache = cell.forward(x, h)
            new_hidden.append(x)
            caches.append(cache)
        return x, new_hidden, caches

    def step_backward(self, d_top: np.ndarray, d_hidden: Sequence[np.ndarray], caches
                      ) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Backward through one time step.

        Args:
            d_top: Gradient w.r.t. the top layer output of this step
            d_hidden: Gradient w.r.t. each layer's new hidden state flowing in from the next step
            caches: Caches returned by ``step``

        Returns:
            (gradient w.r.t. the step input, gradients w.r.t. the previous hidden states)
        """
        d_prev: List[np.ndarray] = [None] * self.num_layers  # type: ignore
        d_out = d_top
        for l in reversed(range(self.num_layers)):
            dx, dh = self.cells[l].backward(d_out + d_hidden[l], caches[l])
            d_prev[l] = dh
            d_out = dx
        return d_out, d_prev


# ---------------------------------------------------------------------------
# Diagonal Gaussian
# ---------------------------------------------------------------------------

def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Per-row log density of a diagonal Gaussian."""
    if mean.shape != action.shape or log_std.shape != (mean.shape[-1],):
        raise ValueError(f"Shape mismatch: mean {mean.shape}, log_std {log_std.shape}, action {action.shape}")
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    """Entropy of a diagonal Gaussian: sum_i (log sigma_i + (1 + log 2 pi) / 2)."""
    return float(np.sum(log_std + 0.5 * (1.0 + LOG_2PI)))


def gaussian_head(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> Tuple[np.ndarray, float]:
    return gaussian_log_prob(mean, log_std, action), gaussian_entropy(log_std)


def gaussian_log_prob_backward(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray,
                               d_log_prob: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of sum(d_log_prob * log_prob) w.r.t. mean (B, D) and log_std (D,)."""
    inv_var = np.exp(-2.0 * log_std)
    diff = action - mean
    d_mean = d_log_prob[:, None] * diff * inv_var
    d_log_std = np.sum(d_log_prob[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    return d_mean, d_log_std


def gaussian_sample(mean: np.ndarray, log_std: np.ndarray,
                    rngs: Union[np.random.Generator, Sequence[np.random.Generator]]) -> np.ndarray:
    """
    Draw one action per row; row i uses ``rngs[i]`` when a sequence of generators is given.
    """
    std = np.exp(log_std)
    if isinstance(rngs, np.random.Generator):
        eps = rngs.standard_normal(mean.shape)
    else:
        if len(rngs) != mean.shape[0]:
            raise ValueError(f"Need one generator per row, got {len(rngs)} for {mean.shape[0]} rows")
        eps = np.stack([rng.standard_normal(mean.shape[1]) for rng in rngs])
    return mean + std * eps


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """
    One bias-corrected Adam update of every parameter; gradients are zeroed afterwards.

    Raises:
        ValueError: If no gradient was accumulated since the last step
    """
    if not store.has_grads or not len(store):
        raise ValueError("adam_step called without accumulated gradients")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, value in store.values.items():
        g = store.grads[name]
        m, v = store.m[name], store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        value -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(value.dtype)
    store.zero_grad()


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_abs_error: float
    max_rel_error: float
    checked: int
    passed: bool
    worst: Optional[Tuple[str, Tuple[int, ...]]] = None
    per_param: Dict[str, float] = field(default_factory=dict)


def grad_check(loss_fn: Callable[[], float], params: Mapping[str, np.ndarray],
               analytic: Mapping[str, np.ndarray], eps: float = 1e-6, tolerance: float = 1e-4,
               abs_floor: float = 1e-8, max_entries: Optional[int] = None,
               rng: Optional[np.random.Generator] = None) -> GradCheckReport:
    """
    Compare analytic gradients with central finite differences.

    ``params`` are perturbed in place one entry at a time and ``loss_fn`` is
    re-evaluated; every array is restored afterwards. An entry passes when its
    relative error is within ``tolerance`` or its absolute error is below
    ``abs_floor``.

    Args:
        loss_fn: Closure returning the scalar loss for the current parameter values
        params: Arrays to perturb (float64)
        analytic: Analytic gradient per name
        eps: Finite-difference step
        tolerance: Relative error tolerance
        abs_floor: Absolute error below which an entry always passes
        max_entries: Optional cap on checked entries per array (random subset)
        rng: Generator for the subset selection

    Returns:
        GradCheckReport
    """
    rng = rng or np.random.default_rng(0)
    max_abs = max_rel = 0.0
    checked = 0
    passed = True
    worst = None
    per_param: Dict[str, float] = {}

    for name, array in params.items():
        grad = np.asarray(analytic[name])
        if grad.shape != array.shape:
            raise ValueError(f"Analytic gradient shape {grad.shape} does not match '{name}' {array.shape}")
        flat_indices = np.arange(array.size)
        if max_entries is not None and array.size > max_entries:
            flat_indices = rng.choice(array.size, size=max_entries, replace=False)

        param_rel = 0.0
        for flat in flat_indices:
            idx = np.unravel_index(int(flat), array.shape)
            original = array[idx]
            array[idx] = original + eps
            plus = float(loss_fn())
            array[idx] = original - eps
            minus = float(loss_fn())
            array[idx] = original
            numeric = (plus - minus) / (2.0 * eps)

            abs_err = abs(float(grad[idx]) - numeric)
            rel_err = abs_err / max(abs(float(grad[idx])), abs(numeric), 1e-12)
            if abs_err <= abs_floor:
                rel_err = 0.0
            checked += 1
            param_rel = max(param_rel, rel_err)
            max_abs = max(max_abs, abs_err)
            if rel_err > max_rel:
                max_rel = rel_err
                worst = (name, tuple(int(i) for i in idx))
            if rel_err > tolerance:
                passed = False
        per_param[name] = param_rel

    return GradCheckReport(max_abs_error=max_abs, max_rel_error=max_rel, checked=checked,
                           passed=passed, worst=worst, per_param=per_param)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def architecture_hash(kind: str, architecture: Mapping[str, Any],
                      shapes: Sequence[Tuple[str, Tuple[int, ...]]]) -> str:
    return hlp.sha256_json({'kind': kind, 'architecture': dict(architecture),
                            'shapes': [[name, list(shape)] for name, shape in shapes]})


def manifest_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + MANIFEST_SUFFIX)


def save_checkpoint(path: Union[str, Path], tensors: Mapping[str, np.ndarray],
                    manifest: Mapping[str, Any]) -> Path:
    """
    Write named tensors as float32 plus a JSON manifest next to the file.

    Args:
        path: Checkpoint file path
        tensors: Mapping name -> array
        manifest: JSON-serializable metadata (architecture, hash, pattern, ...)

    Returns:
        Path of the checkpoint file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [np.array([len(tensors)], dtype='<u4').tobytes()]
    for name, value in tensors.items():
        encoded = name.encode('utf-8')
        value = np.asarray(value)
        chunks.append(np.array([len(encoded)], dtype='<u4').tobytes())
        chunks.append(encoded)
        chunks.append(np.array([value.ndim, *value.shape], dtype='<u4').tobytes())
        chunks.append(np.ascontiguousarray(value, dtype='<f4').tobytes())
    with open(path, 'wb') as f:
        f.write(b''.join(chunks))

    manifest = dict(manifest)
    manifest['tensor_count'] = len(tensors)
    manifest['sha256'] = hlp.sha256_file(path)
    hlp.write_json(manifest, manifest_path(path))
    logger.debug(f"Saved checkpoint {path} ({len(tensors)} tensors)")
    return path


class Network:
    """
    Base class of the policy networks: a ParamStore plus an architecture
    description that is enough to rebuild the network from a checkpoint.
    """
    kind = 'network'

    def __init__(self, dtype=np.float32):
        self.store = ParamStore(dtype)

    def architecture(self) -> Dict[str, Any]:
        raise NotImplementedError

    def architecture_hash(self) -> str:
        return architecture_hash(self.kind, self.architecture(), self.store.shapes())

    def save(self, path: Union[str, Path], **extra: Any) -> Path:
        manifest = {'kind': self.kind, 'architecture': self.architecture(),
                    'architecture_hash': self.architecture_hash()}
        manifest.update(extra)
        return save_checkpoint(path, self.store.values, manifest)

    def load_weights(self, path: Union[str, Path]) -> Dict[str, Any]:
        """Load weights into this network after checking kind and architecture hash; returns the manifest."""
        tensors, manifest = load_checkpoint(path)
        if manifest.get('kind') != self.kind:
            raise CheckpointMismatchError(f"{path}: expected a '{self.kind}' checkpoint, "
                                          f"found '{manifest.get('kind')}'")
        if manifest.get('architecture_hash') != self.architecture_hash():
            raise CheckpointMismatchError(f"{path}: architecture hash does not match the model")
        self.store.load_state_dict(tensors, strict=True)
        return manifest


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Returns:
        (tensors as float32 arrays, manifest)

    Raises:
        FileNotFoundError: If the file or its manifest is missing
        CheckpointMismatchError: If the file is truncated or does not match its manifest
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    manifest = hlp.read_json(manifest_path(path))
    data = path.read_bytes()

    def read_u32(offset: int, count: int = 1) -> Tuple[np.ndarray, int]:
        end = offset + 4 * count
        if end > len(data):
            raise CheckpointMismatchError(f"{path}: truncated checkpoint")
        return np.frombuffer(data, dtype='<u4', count=count, offset=offset), end

    (count,), offset = read_u32(0)
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(int(count)):
        (name_len,), offset = read_u32(offset)
        name = data[offset:offset + int(name_len)].decode('utf-8')
        offset += int(name_len)
        (ndim,), offset = read_u32(offset)
        dims, offset = read_u32(offset, int(ndim))
        shape = tuple(int(d) for d in dims)
        size = int(np.prod(shape)) if shape else 1
        end = offset + 4 * size
        if end > len(data):
            raise CheckpointMismatchError(f"{path}: truncated tensor '{name}'")
        tensors[name] = np.frombuffer(data, dtype='<f4', count=size, offset=offset).reshape(shape).copy()
        offset = end
    if offset != len(data):
        raise CheckpointMismatchError(f"{path}: {len(data) - offset} trailing bytes")
    if manifest.get('tensor_count', len(tensors)) != len(tensors):
        raise CheckpointMismatchError(f"{path}: manifest lists {manifest['tensor_count']} tensors, "
                                      f"file holds {len(tensors)}")
    return tensors, manifest
