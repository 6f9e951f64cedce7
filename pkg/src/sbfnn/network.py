"""Fourier-enhanced network and the plain-MLP baseline.

The main architecture composes an affine lift into an H-dimensional hidden
space, `depth` Fourier layers, and an affine projection back to the model
state.  Each Fourier layer runs the hidden signal through a truncated
half-spectrum transform with per-mode channel mixing, adds a pointwise
(1x1) channel map, and applies an adaptive activation: a softmax-weighted
blend of six candidates, each layer carrying its own mixing logits and its
own trainable sine frequency.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import autodiff as ad
from . import spectral
from .autodiff import ContractError, Tensor

ACTIVATIONS = ("tanh", "relu", "softplus", "elu", "gelu", "sin")

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _relu(v):
    return np.maximum(v, 0.0)


def _drelu(v):
    # subgradient at the kink is defined as 0
    return (v > 0.0).astype(np.float64)


def _softplus(v):
    return np.logaddexp(0.0, v)


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _elu(v):
    return np.where(v > 0.0, v, np.expm1(v))


def _delu(v):
    return np.where(v > 0.0, 1.0, np.exp(np.minimum(v, 0.0)))


def _normal_cdf(v):
    return 0.5 * (1.0 + erf(v / _SQRT2))


def _gelu(v):
    return v * _normal_cdf(v)


def _dgelu(v):
    return _normal_cdf(v) + v * _INV_SQRT_2PI * np.exp(-0.5 * v * v)


def activation_eval(kind: str, x, beta: float | Tensor = 1.0) -> Tensor:
    """One fixed activation; `beta` is the sine frequency and is ignored elsewhere."""
    x = ad.as_tensor(x)
    if kind == "tanh":
        return ad.tanh(x)
    if kind == "relu":
        return ad.custom_unary(x, _relu, _drelu, "relu")
    if kind == "softplus":
        return ad.custom_unary(x, _softplus, _sigmoid, "softplus")
    if kind == "elu":
        return ad.custom_unary(x, _elu, _delu, "elu")
    if kind == "gelu":
        return ad.custom_unary(x, _gelu, _dgelu, "gelu")
    if kind == "sin":
        return ad.sin(ad.mul(x, beta))
    raise ContractError(f"unknown activation kind: {kind!r}")


def softmax_weights(r) -> Tensor:
    r = ad.as_tensor(r)
    return ad.div(ad.exp(r), ad.sum_all(ad.exp(r)))


def adaptive_mix(x, r, beta_sin) -> Tensor:
    """Softmax(r)-weighted blend of the six candidate activations at x."""
    r = ad.as_tensor(r)
    if r.size != len(ACTIVATIONS):
        raise ContractError(f"adaptive logits must have length {len(ACTIVATIONS)}")
    w = softmax_weights(r)
    out = None
    for j, kind in enumerate(ACTIVATIONS):
        term = ad.mul(activation_eval(kind, x, beta_sin), ad.elem(w, j))
        out = term if out is None else ad.add(out, term)
    return out


@dataclass
class FourierLayerParams:
    """One spectral block: complex channel mixer, pointwise map, activation state."""

    w_re: Tensor  # (H, H, M)
    w_im: Tensor  # (H, H, M)
    c_w: Tensor   # (H, H), applied as Z @ c_w
    c_b: Tensor   # (H,)
    r: Tensor     # (6,) activation mixing logits
    beta_sin: Tensor  # scalar

    def named(self, i: int):
        p = f"layer{i}"
        return [(f"{p}.w_re", self.w_re), (f"{p}.w_im", self.w_im),
                (f"{p}.c_w", self.c_w), (f"{p}.c_b", self.c_b),
                (f"{p}.r", self.r), (f"{p}.beta_sin", self.beta_sin)]


@dataclass
class FourierNet:
    lift_w: Tensor
    lift_b: Tensor
    layers: list[FourierLayerParams]
    proj_w: Tensor
    proj_b: Tensor
    hidden: int
    modes: int
    activation: str = "adaptive"  # "adaptive" or one of ACTIVATIONS

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = [("lift_w", self.lift_w), ("lift_b", self.lift_b)]
        for i, layer in enumerate(self.layers):
            out.extend(layer.named(i))
        out.extend([("proj_w", self.proj_w), ("proj_b", self.proj_b)])
        return out

    def params(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]

    def param_count(self) -> int:
        return sum(t.size for t in self.params())


@dataclass
class MlpNet:
    """Per-sample feed-forward baseline; no cross-sample mixing."""

    weights: list[Tensor]
    biases: list[Tensor]
    activation: str = "tanh"
    sizes: list[int] = field(default_factory=list)

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"fc{i}.w", w))
            out.append((f"fc{i}.b", b))
        return out

    def params(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]

    def param_count(self) -> int:
        return sum(t.size for t in self.params())


def fourier_layer_forward(z, layer: FourierLayerParams, modes: int,
                          activation: str = "adaptive") -> Tensor:
    """sigma( irfft(W * truncate(rfft(z), M)) + z @ C + bias ) along the sample axis."""
    z = ad.as_tensor(z)
    if z.shape[1] != layer.c_w.shape[0]:
        raise ContractError(
            f"hidden width {z.shape[1]} does not match layer width {layer.c_w.shape[0]}")
    n = z.shape[0]
    # rfft_modes(z, M) == truncate_modes(rfft(z), M) restricted to the kept
    # rows, so the layer never pays for the discarded spectrum
    s = spectral.rfft_modes(z, modes)
    mixed = spectral.channel_mix(s, layer.w_re, layer.w_im)
    pre = ad.add(spectral.irfft_modes(mixed, n),
                 ad.add(ad.matmul(z, layer.c_w), layer.c_b))
    if activation == "adaptive":
        return adaptive_mix(pre, layer.r, layer.beta_sin)
    return activation_eval(activation, pre, layer.beta_sin)


def fnn_forward(x, net: FourierNet) -> Tensor:
    """Lift, `depth` Fourier layers, projection; no activation after projection."""
    x = ad.as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != net.lift_w.shape[0]:
        raise ContractError(
            f"input {x.shape} does not match lift of width {net.lift_w.shape[0]}")
    z = ad.add(ad.matmul(x, net.lift_w), net.lift_b)
    for layer in net.layers:
        z = fourier_layer_forward(z, layer, net.modes, net.activation)
    return ad.add(ad.matmul(z, net.proj_w), net.proj_b)


def mlp_forward(x, net: MlpNet) -> Tensor:
    x = ad.as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != net.weights[0].shape[0]:
        raise ContractError(
            f"input {x.shape} does not match first layer {net.weights[0].shape}")
    z = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = ad.add(ad.matmul(z, w), b)
        if i < last:
            z = activation_eval(net.activation, z)
    return z


def _affine(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[Tensor, Tensor]:
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = rng.uniform(-bound, bound, size=fan_out)
    return Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)


def init_fourier_net(d_in: int, d_out: int, hidden: int = 16, modes: int = 12,
                     depth: int = 4, seed: int = 0,
                     activation: str = "adaptive") -> FourierNet:
    """Deterministic initialization: affine maps ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in));
    spectral weights ~ U[0,1) scaled by 1/H^2; logits start at 0 (uniform mix);
    sine frequency starts at 1."""
    rng = np.random.default_rng(seed)
    lift_w, lift_b = _affine(rng, d_in, hidden)
    layers = []
    scale = 1.0 / (hidden * hidden)
    for _ in range(depth):
        w_re = Tensor(scale * rng.random((hidden, hidden, modes)), requires_grad=True)
        w_im = Tensor(scale * rng.random((hidden, hidden, modes)), requires_grad=True)
        c_w, c_b = _affine(rng, hidden, hidden)
        layers.append(FourierLayerParams(
            w_re=w_re, w_im=w_im, c_w=c_w, c_b=c_b,
            r=Tensor(np.zeros(len(ACTIVATIONS)), requires_grad=True),
            beta_sin=Tensor(1.0, requires_grad=True)))
    proj_w, proj_b = _affine(rng, hidden, d_out)
    return FourierNet(lift_w=lift_w, lift_b=lift_b, layers=layers,
                      proj_w=proj_w, proj_b=proj_b, hidden=hidden, modes=modes,
                      activation=activation)


def init_mlp(sizes: list[int], seed: int = 0, activation: str = "tanh") -> MlpNet:
    if any(s < 1 for s in sizes) or len(sizes) < 2:
        raise ContractError(f"inconsistent layer sizes: {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w, b = _affine(rng, fan_in, fan_out)
        weights.append(w)
        biases.append(b)
    return MlpNet(weights=weights, biases=biases, activation=activation,
                  sizes=list(sizes))


def forward(x, net) -> Tensor:
    if isinstance(net, FourierNet):
        return fnn_forward(x, net)
    return mlp_forward(x, net)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "sbfnn-checkpoint/1"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def save_checkpoint(path, net, seed: int, cfg: dict) -> None:
    if isinstance(net, FourierNet):
        arch = {"kind": "fourier", "hidden": net.hidden, "modes": net.modes,
                "depth": len(net.layers), "activation": net.activation,
                "d_in": net.lift_w.shape[0], "d_out": net.proj_w.shape[1]}
    else:
        arch = {"kind": "mlp", "sizes": net.sizes, "activation": net.activation}
    doc = {
        "format": CHECKPOINT_FORMAT,
        "seed": seed,
        "config_hash": config_hash(cfg),
        "param_count": net.param_count(),
        "arch": arch,
        "params": {name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
                   for name, t in net.named_params()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format: {doc.get('format')!r}")
    arch = doc["arch"]
    if arch["kind"] == "fourier":
        net = init_fourier_net(arch["d_in"], arch["d_out"], hidden=arch["hidden"],
                               modes=arch["modes"], depth=arch["depth"],
                               seed=doc["seed"], activation=arch["activation"])
    else:
        net = init_mlp(arch["sizes"], seed=doc["seed"], activation=arch["activation"])
    for name, t in net.named_params():
        entry = doc["params"][name]
        t.data = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
    return net, doc
