"""Minimal trainable temporal network substrate.

Activations on time-major (T, C) float64 arrays ("Tensor2"). Layers carry
their parameters in one flat vector with per-layer views; backward passes
are exact analytic gradients of the forward map, verified against central
finite differences by grad_check.

Layer zoo: Dense (optional ReLU/GELU), TemporalConv (kernel 3, zero
same-padding), single-head SelfAttention (with residual connection and an
output projection), LayerNorm.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import FormatError, ShapeMismatch

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Dense:
    din: int
    dout: int
    activation: str = "none"

    @property
    def in_dim(self):
        return self.din

    @property
    def out_dim(self):
        return self.dout

    def param_shapes(self):
        return [("W", (self.din, self.dout)), ("b", (self.dout,))]

    def descr(self):
        return f"Dense({self.din},{self.dout},{self.activation})"


@dataclass(frozen=True)
class TemporalConv:
    cin: int
    cout: int
    kernel: int = 3
    activation: str = "none"

    @property
    def in_dim(self):
        return self.cin

    @property
    def out_dim(self):
        return self.cout

    def param_shapes(self):
        return [("K", (self.kernel, self.cin, self.cout)), ("b", (self.cout,))]

    def descr(self):
        return f"TemporalConv({self.cin},{self.cout},{self.kernel},{self.activation})"


@dataclass(frozen=True)
class SelfAttention:
    dim: int

    @property
    def in_dim(self):
        return self.dim

    @property
    def out_dim(self):
        return self.dim

    def param_shapes(self):
        d = self.dim
        return [("Wq", (d, d)), ("Wk", (d, d)), ("Wv", (d, d)), ("Wo", (d, d))]

    def descr(self):
        return f"SelfAttention({self.dim})"


@dataclass(frozen=True)
class LayerNorm:
    dim: int
    eps: float = 1e-5

    @property
    def in_dim(self):
        return self.dim

    @property
    def out_dim(self):
        return self.dim

    def param_shapes(self):
        return [("g", (self.dim,)), ("b", (self.dim,))]

    def descr(self):
        return f"LayerNorm({self.dim})"


@dataclass(frozen=True)
class NetSpec:
    layers: tuple

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeMismatch(
                    f"layer dims incompatible: {prev.descr()} -> {nxt.descr()}"
                )

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def descr(self):
        return "|".join(layer.descr() for layer in self.layers)

    def spec_hash(self):
        digest = hashlib.sha256(self.descr().encode()).digest()
        return int.from_bytes(digest[:8], "little")

    def num_params(self):
        return sum(
            int(np.prod(shape)) for layer in self.layers for _, shape in layer.param_shapes()
        )


@dataclass
class NetParams:
    spec: NetSpec
    flat: np.ndarray  # float64, one buffer for the whole net

    def views(self):
        """Per-layer dict of named parameter views into the flat buffer."""
        out = []
        offset = 0
        for layer in self.spec.layers:
            d = {}
            for name, shape in layer.param_shapes():
                n = int(np.prod(shape))
                d[name] = self.flat[offset : offset + n].reshape(shape)
                offset += n
            out.append(d)
        return out


def init_params(spec, rng):
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases, unit LayerNorm gain."""
    flat = np.zeros(spec.num_params())
    params = NetParams(spec, flat)
    for layer, views in zip(spec.layers, params.views()):
        if isinstance(layer, Dense):
            lim = np.sqrt(6.0 / (layer.din + layer.dout))
            views["W"][:] = rng.uniform(-lim, lim, views["W"].shape)
        elif isinstance(layer, TemporalConv):
            lim = np.sqrt(6.0 / (layer.kernel * (layer.cin + layer.cout)))
            views["K"][:] = rng.uniform(-lim, lim, views["K"].shape)
        elif isinstance(layer, SelfAttention):
            lim = np.sqrt(6.0 / (2 * layer.dim))
            for name in ("Wq", "Wk", "Wv", "Wo"):
                views[name][:] = rng.uniform(-lim, lim, views[name].shape)
        elif isinstance(layer, LayerNorm):
            views["g"][:] = 1.0
    return params


# ---------------------------------------------------------------------------
# Activations


def _act(z, kind):
    if kind == "none":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "gelu":
        return 0.5 * z * (1.0 + erf(z / _SQRT2))
    raise ShapeMismatch(f"unknown activation {kind!r}")


def _dact(z, kind):
    if kind == "none":
        return np.ones_like(z)
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    if kind == "gelu":
        phi = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        return 0.5 * (1.0 + erf(z / _SQRT2)) + z * phi
    raise ShapeMismatch(f"unknown activation {kind!r}")


def softmax(x, axis=-1):
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# Layer forward/backward


def _conv_cols(x, kernel):
    t = x.shape[0]
    pad = (kernel - 1) // 2
    xpad = np.zeros((t + kernel - 1, x.shape[1]))
    xpad[pad : pad + t] = x
    return np.stack([xpad[i : i + t] for i in range(kernel)], axis=1)  # (T, k, cin)


def _forward_layer(layer, views, x):
    if isinstance(layer, Dense):
        z = x @ views["W"] + views["b"]
        return _act(z, layer.activation), (x, z)
    if isinstance(layer, TemporalConv):
        cols = _conv_cols(x, layer.kernel)
        t = x.shape[0]
        z = cols.reshape(t, -1) @ views["K"].reshape(-1, layer.cout) + views["b"]
        return _act(z, layer.activation), (cols, z)
    if isinstance(layer, SelfAttention):
        scale = 1.0 / np.sqrt(layer.dim)
        q = x @ views["Wq"]
        k = x @ views["Wk"]
        v = x @ views["Wv"]
        a = softmax(q @ k.T * scale, axis=-1)
        h = a @ v
        return x + h @ views["Wo"], (x, q, k, v, a, h)
    if isinstance(layer, LayerNorm):
        mu = np.mean(x, axis=1, keepdims=True)
        var = np.var(x, axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + layer.eps)
        xhat = (x - mu) * inv
        return views["g"] * xhat + views["b"], (xhat, inv)
    raise ShapeMismatch(f"unknown layer {layer!r}")


def _backward_layer(layer, views, cache, dy, dviews):
    if isinstance(layer, Dense):
        x, z = cache
        dz = dy * _dact(z, layer.activation)
        dviews["W"] += x.T @ dz
        dviews["b"] += dz.sum(axis=0)
        return dz @ views["W"].T
    if isinstance(layer, TemporalConv):
        cols, z = cache
        t, k, cin = cols.shape
        dz = dy * _dact(z, layer.activation)
        dviews["K"] += (cols.reshape(t, -1).T @ dz).reshape(k, cin, layer.cout)
        dviews["b"] += dz.sum(axis=0)
        dcols = (dz @ views["K"].reshape(-1, layer.cout).T).reshape(t, k, cin)
        pad = (k - 1) // 2
        dxpad = np.zeros((t + k - 1, cin))
        for i in range(k):
            dxpad[i : i + t] += dcols[:, i]
        return dxpad[pad : pad + t]
    if isinstance(layer, SelfAttention):
        x, q, k, v, a, h = cache
        scale = 1.0 / np.sqrt(layer.dim)
        dviews["Wo"] += h.T @ dy
        dh = dy @ views["Wo"].T
        da = dh @ v.T
        dv = a.T @ dh
        ds = a * (da - np.sum(da * a, axis=1, keepdims=True))
        dq = ds @ k * scale
        dk = ds.T @ q * scale
        dviews["Wq"] += x.T @ dq
        dviews["Wk"] += x.T @ dk
        dviews["Wv"] += x.T @ dv
        return dy + dq @ views["Wq"].T + dk @ views["Wk"].T + dv @ views["Wv"].T
    if isinstance(layer, LayerNorm):
        xhat, inv = cache
        dviews["g"] += np.sum(dy * xhat, axis=0)
        dviews["b"] += dy.sum(axis=0)
        dxhat = dy * views["g"]
        return inv * (
            dxhat
            - np.mean(dxhat, axis=1, keepdims=True)
            - xhat * np.mean(dxhat * xhat, axis=1, keepdims=True)
        )
    raise ShapeMismatch(f"unknown layer {layer!r}")


def net_forward(spec, params, x):
    """Run the stack; the returned cache suffices for an exact backward pass."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ShapeMismatch(f"input must be (T, {spec.in_dim}), got {x.shape}")
    caches = []
    for layer, views in zip(spec.layers, params.views()):
        x, cache = _forward_layer(layer, views, x)
        caches.append(cache)
    return x, caches


def net_backward(spec, params, caches, dy):
    """Exact gradients: returns (dparams flat vector, dx)."""
    dy = np.asarray(dy, dtype=np.float64)
    if dy.ndim != 2 or dy.shape[1] != spec.out_dim:
        raise ShapeMismatch(f"dy must be (T, {spec.out_dim}), got {dy.shape}")
    dflat = np.zeros_like(params.flat)
    dparams = NetParams(spec, dflat)
    for layer, views, dviews, cache in zip(
        reversed(spec.layers),
        reversed(params.views()),
        reversed(dparams.views()),
        reversed(caches),
    ):
        dy = _backward_layer(layer, views, cache, dy, dviews)
    return dflat, dy


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-3):
        return cls(m=np.zeros_like(params.flat), v=np.zeros_like(params.flat), lr=lr)


def adam_step(params, grads, state):
    """Standard bias-corrected Adam update, in place. Returns (params, state)."""
    if grads.shape != params.flat.shape:
        raise ShapeMismatch("gradient shape does not match parameters")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    params.flat -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    coords: np.ndarray
    rel_errors: np.ndarray
    max_rel_error: float
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.max_rel_error < self.tolerance)


def grad_check(spec, loss_fn, x, tolerance, n_coords=64, seed=0, h=1e-4, params=None):
    """Compare analytic parameter gradients against central finite differences.

    loss_fn maps the network output y to (scalar loss, dloss/dy).
    """
    rng = np.random.default_rng(seed)
    if params is None:
        params = init_params(spec, rng)
    y, caches = net_forward(spec, params, x)
    _, dy = loss_fn(y)
    analytic, _ = net_backward(spec, params, caches, dy)

    size = params.flat.size
    coords = rng.choice(size, size=min(n_coords, size), replace=False)
    rel = np.zeros(len(coords))
    for i, c in enumerate(coords):
        orig = params.flat[c]
        params.flat[c] = orig + h
        lp, _ = loss_fn(net_forward(spec, params, x)[0])
        params.flat[c] = orig - h
        lm, _ = loss_fn(net_forward(spec, params, x)[0])
        params.flat[c] = orig
        numeric = (lp - lm) / (2.0 * h)
        rel[i] = abs(numeric - analytic[c]) / max(abs(numeric), abs(analytic[c]), 1e-6)
    return GradCheckReport(coords, rel, float(np.max(rel)) if len(rel) else 0.0, tolerance)


# ---------------------------------------------------------------------------
# Checkpoints: magic "SPKW", version u16, spec hash u64, count u64, f32 values

SPKW_MAGIC = b"SPKW"
SPKW_VERSION = 1
SPKW_HEADER = struct.Struct("<4sHQQ")


def save_params(params, path):
    header = SPKW_HEADER.pack(
        SPKW_MAGIC, SPKW_VERSION, params.spec.spec_hash(), params.flat.size
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.flat.astype("<f4").tobytes())


def save_vector(values, descr, path):
    """Checkpoint a bare float vector under a descriptor string (same SPKW layout)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    digest = hashlib.sha256(descr.encode()).digest()
    header = SPKW_HEADER.pack(SPKW_MAGIC, SPKW_VERSION, int.from_bytes(digest[:8], "little"), values.size)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype("<f4").tobytes())


def load_vector(descr, count, path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < SPKW_HEADER.size:
        raise FormatError("truncated checkpoint header")
    magic, version, spec_hash, n = SPKW_HEADER.unpack_from(data)
    digest = hashlib.sha256(descr.encode()).digest()
    if magic != SPKW_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != SPKW_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if spec_hash != int.from_bytes(digest[:8], "little"):
        raise FormatError("checkpoint descriptor hash does not match")
    if n != count or len(data) != SPKW_HEADER.size + n * 4:
        raise FormatError("checkpoint size does not match")
    return np.frombuffer(data, dtype="<f4", offset=SPKW_HEADER.size).astype(np.float64)


def load_params(spec, path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < SPKW_HEADER.size:
        raise FormatError("truncated checkpoint header")
    magic, version, spec_hash, count = SPKW_HEADER.unpack_from(data)
    if magic != SPKW_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != SPKW_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if spec_hash != spec.spec_hash():
        raise FormatError("checkpoint spec hash does not match")
    if count != spec.num_params():
        raise FormatError("checkpoint parameter count does not match spec")
    expected = SPKW_HEADER.size + count * 4
    if len(data) != expected:
        raise FormatError(f"checkpoint length {len(data)} != expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=SPKW_HEADER.size).astype(np.float64)
    return NetParams(spec, values.copy())
