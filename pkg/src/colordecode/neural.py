"""Fully connected classifier with 1-D batch normalization, written in numpy.

Layer ``l`` computes ``affine -> batchnorm -> relu`` (hidden layers) or
``affine -> batchnorm`` (output layer). ``bn_after_activation`` swaps the
hidden-layer order to ``affine -> relu -> batchnorm``; ``output_batchnorm``
removes the normalization on the logits.

Parameters are stored as float32 by default. Forward and backward passes
run in float64 and gradients are cast back to the parameter dtype.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"HNET"
CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    pass


class DegenerateBatch(ValueError):
    pass


class CorruptCheckpoint(ValueError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_layers: int
    hidden_width: int
    output_dim: int = 16
    output_batchnorm: bool = True
    bn_after_activation: bool = False

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_width < 1 or self.hidden_layers < 0:
            raise ValueError(f"invalid network shape {self}")

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]

    @property
    def num_layers(self) -> int:
        return self.hidden_layers + 1

    def has_bn(self, layer: int) -> bool:
        return layer < self.hidden_layers or self.output_batchnorm


@dataclass
class MlpModel:
    config: MlpConfig
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    training: bool = True

    def train(self) -> "MlpModel":
        self.training = True
        return self

    def eval(self) -> "MlpModel":
        self.training = False
        return self


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_model(config: MlpConfig, seed: int = 0, dtype=np.float32) -> MlpModel:
    """Xavier-normal weights, zero biases, batch-norm scale drawn from N(1, 0.02^2)."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    widths = config.widths
    for l in range(config.num_layers):
        fan_in, fan_out = widths[l], widths[l + 1]
        std = np.sqrt(2.0 / (fan_in + fan_out))
        params[f"W{l}"] = rng.normal(0.0, std, size=(fan_out, fan_in)).astype(dtype)
        params[f"b{l}"] = np.zeros(fan_out, dtype=dtype)
        if config.has_bn(l):
            params[f"gamma{l}"] = rng.normal(1.0, 0.02, size=fan_out).astype(dtype)
            params[f"beta{l}"] = np.zeros(fan_out, dtype=dtype)
            buffers[f"mean{l}"] = np.zeros(fan_out, dtype=dtype)
            buffers[f"var{l}"] = np.ones(fan_out, dtype=dtype)
    return MlpModel(config=config, params=params, buffers=buffers)


def relu(x):
    return np.maximum(x, 0.0)


def _bn_forward(model, l, x, training, cache):
    p, buf = model.params, model.buffers
    gamma = p[f"gamma{l}"].astype(np.float64)
    beta = p[f"beta{l}"].astype(np.float64)
    if training:
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        B = x.shape[0]
        rho = BN_MOMENTUM
        dt = buf[f"mean{l}"].dtype
        buf[f"mean{l}"] = ((1 - rho) * buf[f"mean{l}"] + rho * mean).astype(dt)
        buf[f"var{l}"] = ((1 - rho) * buf[f"var{l}"] + rho * var * B / (B - 1)).astype(dt)
    else:
        mean = buf[f"mean{l}"].astype(np.float64)
        var = buf[f"var{l}"].astype(np.float64)
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean) * inv_std
    cache[f"xhat{l}"] = xhat
    cache[f"inv_std{l}"] = inv_std
    return gamma * xhat + beta


def _bn_backward(model, l, dy, cache, grads):
    xhat = cache[f"xhat{l}"]
    inv_std = cache[f"inv_std{l}"]
    gamma = model.params[f"gamma{l}"].astype(np.float64)
    grads[f"gamma{l}"] = (dy * xhat).sum(axis=0)
    grads[f"beta{l}"] = dy.sum(axis=0)
    dxhat = dy * gamma
    B = dy.shape[0]
    return inv_std / B * (B * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


def forward(model: MlpModel, inputs, training: bool | None = None):
    """Logits (``B x output_dim``) and the cache needed by :func:`backward`.

    In training mode the batch statistics are used and the running
    statistics are updated in place.
    """
    training = model.training if training is None else training
    cfg = model.config
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ShapeMismatch(f"inputs of shape {x.shape} do not match input_dim={cfg.input_dim}")
    if training and x.shape[0] < 2:
        raise DegenerateBatch("training mode needs at least 2 rows for batch statistics")
    cache: dict[str, np.ndarray] = {"a0": x, "training": training}
    h = x
    for l in range(cfg.num_layers):
        W = model.params[f"W{l}"].astype(np.float64)
        b = model.params[f"b{l}"].astype(np.float64)
        z = h @ W.T + b
        cache[f"z{l}"] = z
        last = l == cfg.num_layers - 1
        if last:
            h = _bn_forward(model, l, z, training, cache) if cfg.has_bn(l) else z
        elif cfg.bn_after_activation:
            h = _bn_forward(model, l, relu(z), training, cache)
        else:
            y = _bn_forward(model, l, z, training, cache)
            cache[f"y{l}"] = y
            h = relu(y)
        cache[f"a{l + 1}"] = h
    return h, cache


def backward(model: MlpModel, dlogits, cache) -> dict[str, np.ndarray]:
    """Parameter gradients (float64) given the gradient of the loss w.r.t. the logits."""
    if not cache["training"]:
        raise ValueError("backward through inference-mode batch norm is not supported")
    cfg = model.config
    grads: dict[str, np.ndarray] = {}
    d = np.asarray(dlogits, dtype=np.float64)
    for l in reversed(range(cfg.num_layers)):
        last = l == cfg.num_layers - 1
        if last:
            dz = _bn_backward(model, l, d, cache, grads) if cfg.has_bn(l) else d
        elif cfg.bn_after_activation:
            da = _bn_backward(model, l, d, cache, grads)
            dz = da * (cache[f"z{l}"] > 0)
        else:
            dy = d * (cache[f"y{l}"] > 0)
            dz = _bn_backward(model, l, dy, cache, grads)
        grads[f"W{l}"] = dz.T @ cache[f"a{l}"]
        grads[f"b{l}"] = dz.sum(axis=0)
        d = dz @ model.params[f"W{l}"].astype(np.float64)
    return grads


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels) -> float:
    logp = log_softmax(np.asarray(logits, dtype=np.float64))
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_grad(model: MlpModel, inputs, labels):
    """Mean softmax cross-entropy and its gradient for every parameter.

    Runs in training mode, so the running batch-norm statistics move.
    """
    labels = np.asarray(labels, dtype=np.int64)
    x = np.asarray(inputs)
    if labels.shape != (x.shape[0],):
        raise ShapeMismatch(f"{labels.shape[0]} labels for {x.shape[0]} inputs")
    if labels.size and (labels.min() < 0 or labels.max() >= model.config.output_dim):
        raise ValueError("labels out of range")
    logits, cache = forward(model, x, training=True)
    logp = log_softmax(logits)
    B = len(labels)
    loss = float(-logp[np.arange(B), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    grads = backward(model, dlogits, cache)
    return loss, {k: g.astype(model.params[k].dtype) for k, g in grads.items()}


def adam_step(model: MlpModel, adam: AdamState, grads) -> None:
    """One bias-corrected Adam update, applied in place."""
    adam.t += 1
    bc1 = 1.0 - adam.beta1**adam.t
    bc2 = 1.0 - adam.beta2**adam.t
    for name, param in model.params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != param.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, expected {param.shape}")
        m = adam.m.get(name)
        if m is None:
            m = np.zeros_like(param)
            v = np.zeros_like(param)
        else:
            v = adam.v[name]
        m64 = adam.beta1 * m.astype(np.float64) + (1 - adam.beta1) * g
        v64 = adam.beta2 * v.astype(np.float64) + (1 - adam.beta2) * g * g
        adam.m[name] = m64.astype(param.dtype)
        adam.v[name] = v64.astype(param.dtype)
        step = adam.lr * (m64 / bc1) / (np.sqrt(v64 / bc2) + adam.eps)
        model.params[name] = (param.astype(np.float64) - step).astype(param.dtype)


def predict_logits(model: MlpModel, inputs) -> np.ndarray:
    return forward(model, inputs, training=False)[0]


def predict_class(model: MlpModel, inputs) -> np.ndarray:
    """Argmax class per row using running statistics; ties go to the lowest index."""
    return np.argmax(predict_logits(model, inputs), axis=1)


def parameter_hash(model: MlpModel) -> str:
    h = hashlib.sha256()
    for name in sorted(model.params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.params[name]).tobytes())
    for name in sorted(model.buffers):
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.buffers[name]).tobytes())
    return h.hexdigest()


def _tensor_list(model: MlpModel, adam: AdamState | None):
    out = [(f"param/{k}", v) for k, v in model.params.items()]
    out += [(f"buffer/{k}", v) for k, v in model.buffers.items()]
    if adam is not None:
        for k in model.params:
            if k in adam.m:
                out.append((f"adam_m/{k}", adam.m[k]))
                out.append((f"adam_v/{k}", adam.v[k]))
    return out


def save_checkpoint(model: MlpModel, adam: AdamState | None = None, metadata: dict | None = None) -> bytes:
    """Serialise the model, optimizer state and free-form metadata.

    Layout: ``HNET``, u32 version, u32 header length, JSON header, then the
    raw little-endian tensors in the order listed in the header.
    """
    tensors = _tensor_list(model, adam)
    header = {
        "config": asdict(model.config),
        "training": model.training,
        "adam": None
        if adam is None
        else {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "t": adam.t},
        "tensors": [
            {"name": name, "shape": list(arr.shape), "dtype": np.dtype(arr.dtype).newbyteorder("<").str}
            for name, arr in tensors
        ],
        "metadata": metadata or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
    buf.write(blob)
    for (_, arr), spec in zip(tensors, header["tensors"]):
        buf.write(np.ascontiguousarray(arr, dtype=spec["dtype"]).tobytes())
    return buf.getvalue()


def load_checkpoint(data: bytes):
    """Inverse of :func:`save_checkpoint`; returns ``(model, adam, metadata)``.

    Raises:
        CorruptCheckpoint: on a bad magic, unknown version, malformed header
            or a payload whose length disagrees with the header.
    """
    if len(data) < 12 or data[:4] != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint("bad magic")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {version}")
    if 12 + hlen > len(data):
        raise CorruptCheckpoint("truncated header")
    try:
        header = json.loads(data[12 : 12 + hlen])
        config = MlpConfig(**header["config"])
        specs = header["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"malformed header: {exc}") from None
    offset = 12 + hlen
    arrays = {}
    for spec in specs:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        nbytes = count * dt.itemsize
        if offset + nbytes > len(data):
            raise CorruptCheckpoint("truncated tensor payload")
        arr = np.frombuffer(data, dtype=dt, count=count, offset=offset).reshape(spec["shape"])
        arrays[spec["name"]] = arr.astype(dt.newbyteorder("="))
        offset += nbytes
    if offset != len(data):
        raise CorruptCheckpoint(f"{len(data) - offset} trailing bytes")

    def group(prefix):
        return {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith(prefix + "/")}

    model = MlpModel(config=config, params=group("param"), buffers=group("buffer"), training=header["training"])
    adam = None
    if header["adam"] is not None:
        adam = AdamState(**header["adam"], m=group("adam_m"), v=group("adam_v"))
    return model, adam, header["metadata"]
