"""Stratified time sampling, loss assembly, Adam, and the full-batch loop.

One training run is: sample train/test times once by Latin hypercube,
integrate the reference trajectory for the test times, then iterate
full-batch epochs of forward / loss / backward / Adam with a decade-decay
learning rate.  The loss has four parts: the initial-condition 2-norm, the
mean-squared residual between the finite-difference time derivative of the
prediction and the model right-hand side evaluated on the prediction, a
boundary term (identically zero here: the Neumann condition lives in the
Laplacian stencil), and the low-variance penalty for oscillatory models.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import evaluation, network, oracle
from .autodiff import ContractError, Tensor
from .biomodels import ModelSpec, get_model
from .oracle import DivergenceError

ARCHITECTURES = ("sbfnn", "pinn-mlp")
ACTIVATION_MODES = ("adaptive",) + network.ACTIVATIONS


class ConfigError(ValueError):
    """A configuration field is missing, unknown, or out of range."""


@dataclass
class TrainConfig:
    model: str
    arch: str = "sbfnn"
    activation: str = "adaptive"
    constraint: bool = True
    lambda_o: float = 1.0
    lambda_f: float = 1.0
    lambda_b: float = 0.0
    lambda_p: float = 1.0
    alpha: float = 0.05
    tau: float = 100.0
    lr_init: float = 0.01
    b: float = 1000.0
    max_epochs: int = 50_000
    train_samples: int = 100
    test_samples: int = 10
    seed: int = 0
    hidden: int = 16
    modes: int = 12
    depth: int = 4
    mlp_hidden: list[int] = field(default_factory=lambda: [64, 64, 64, 64])
    log_every: int = 100
    model_params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def method_label(self) -> str:
        if self.arch == "pinn-mlp":
            return "pinn-mlp"
        label = f"sbfnn-{self.activation}"
        if self.constraint and self.lambda_p > 0:
            label += "+constraint"
        return label


def default_config(model_name: str, **overrides) -> TrainConfig:
    """Per-model defaults (epoch budget, decay constant, sample count)."""
    spec = get_model(model_name, overrides.get("model_params"))
    cfg = TrainConfig(model=model_name, max_epochs=spec.epochs, b=spec.lr_decay_b,
                      train_samples=spec.train_samples)
    cfg.test_samples = max(2, cfg.train_samples // 10)
    explicit_test = "test_samples" in overrides
    for key, val in overrides.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config field: {key!r}")
        setattr(cfg, key, val)
    if "train_samples" in overrides and not explicit_test:
        cfg.test_samples = max(2, cfg.train_samples // 10)
    validate_config(cfg)
    return cfg


def config_from_dict(doc: dict) -> TrainConfig:
    doc = dict(doc)
    model_name = doc.pop("model", None)
    if model_name is None:
        raise ConfigError("config is missing required field 'model'")
    return default_config(model_name, **doc)


def validate_config(cfg: TrainConfig) -> None:
    if cfg.arch not in ARCHITECTURES:
        raise ConfigError(f"invalid field 'arch': {cfg.arch!r} not in {ARCHITECTURES}")
    if cfg.activation not in ACTIVATION_MODES:
        raise ConfigError(
            f"invalid field 'activation': {cfg.activation!r} not in {ACTIVATION_MODES}")
    for name in ("lambda_o", "lambda_f", "lambda_b", "lambda_p"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"invalid field {name!r}: must be nonnegative")
    if cfg.tau <= 0:
        raise ConfigError("invalid field 'tau': must be positive")
    if cfg.lr_init <= 0 or cfg.b <= 0:
        raise ConfigError("invalid field 'lr_init'/'b': must be positive")
    if cfg.max_epochs < 0:
        raise ConfigError("invalid field 'max_epochs': must be >= 0")
    if cfg.train_samples < 3:
        raise ConfigError("invalid field 'train_samples': need at least 3")
    if cfg.test_samples < 2:
        raise ConfigError("invalid field 'test_samples': need at least 2")


# ---------------------------------------------------------------------------
# sampling and schedule
# ---------------------------------------------------------------------------

def lhs_sample(n: int, horizon: float, seed) -> np.ndarray:
    """Latin hypercube times: t=0 plus one uniform draw from each of the n-1
    equal strata of (0, horizon], sorted ascending, deterministic per seed."""
    if n < 2:
        raise ContractError(f"need at least 2 samples, got {n}")
    if horizon <= 0:
        raise ContractError("horizon must be positive")
    rng = np.random.default_rng(seed)
    width = horizon / (n - 1)
    lows = width * np.arange(n - 1)
    # 1 - u lies in (0, 1], keeping each draw strictly inside its stratum
    draws = lows + width * (1.0 - rng.random(n - 1))
    return np.concatenate([[0.0], draws])


def lr_at(ep: int, lr_init: float, b: float) -> float:
    """Decade decay: b * lr_init / (b + ep)."""
    return b * lr_init / (b + ep)


# ---------------------------------------------------------------------------
# differentiable pieces of the loss
# ---------------------------------------------------------------------------

def _fd_coefficients(times: np.ndarray):
    """Second-order 3-point derivative weights on a nonuniform grid."""
    n = times.size
    idx = np.empty((n, 3), dtype=np.intp)
    idx[0] = (0, 1, 2)
    idx[-1] = (n - 3, n - 2, n - 1)
    interior = np.arange(1, n - 1)
    idx[1:-1, 0] = interior - 1
    idx[1:-1, 1] = interior
    idx[1:-1, 2] = interior + 1
    a, b, c = times[idx[:, 0]], times[idx[:, 1]], times[idx[:, 2]]
    x = times
    w = np.empty((n, 3))
    w[:, 0] = (2 * x - b - c) / ((a - b) * (a - c))
    w[:, 1] = (2 * x - a - c) / ((b - a) * (b - c))
    w[:, 2] = (2 * x - a - b) / ((c - a) * (c - b))
    return idx, w


def time_derivative(y, times):
    """d y / d t on the sample grid: second-order nonuniform central
    differences inside, one-sided second-order at both ends; linear in y."""
    times = np.asarray(times, dtype=np.float64)
    if times.size < 3:
        raise ContractError("time derivative needs at least 3 samples")
    if np.any(np.diff(times) <= 0):
        raise ContractError("times must be strictly ascending (no duplicates)")
    idx, w = _fd_coefficients(times)

    def apply(arr):
        return (w[:, 0:1] * arr[idx[:, 0]] + w[:, 1:2] * arr[idx[:, 1]]
                + w[:, 2:3] * arr[idx[:, 2]])

    if not isinstance(y, Tensor):
        return apply(np.asarray(y))

    out = apply(y.data)

    def vjp(g):
        gy = np.zeros_like(y.data)
        for k in range(3):
            np.add.at(gy, idx[:, k], w[:, k:k + 1] * g)
        return (gy,)

    return ad._make(out, (y,), vjp, "time_derivative")


def normalize01(v):
    """(v - min) / (max - min); all zeros when the range is below 1e-12."""
    if isinstance(v, Tensor):
        span = float(v.data.max() - v.data.min())
        if span < 1e-12:
            return Tensor(np.zeros(v.shape))
        lo = ad.vmin(v)
        return (v - lo) / (ad.vmax(v) - lo)
    v = np.asarray(v, dtype=np.float64)
    span = v.max() - v.min()
    if span < 1e-12:
        return np.zeros_like(v)
    return (v - v.min()) / span


def phi(x, alpha: float, tau: float):
    """Soft low-variance indicator: 1 below the threshold, 0 past it."""
    if tau <= 0:
        raise ContractError("tau must be positive")
    if isinstance(x, Tensor):
        return 0.5 * (1.0 - ad.tanh((x - alpha) * tau))
    return 0.5 * (1.0 - np.tanh((x - alpha) * tau))


def variance_penalty(y, alpha: float = 0.05, tau: float = 100.0):
    """Sum over output dimensions of phi(var(normalize01(column)))."""
    if isinstance(y, Tensor):
        if y.shape[0] < 2:
            raise ContractError("variance penalty needs at least 2 samples")
        total = None
        for d in range(y.shape[1]):
            term = phi(ad.variance(normalize01(ad.cols(y, (d,)))), alpha, tau)
            total = term if total is None else total + term
        return total
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if y.shape[0] < 2:
        raise ContractError("variance penalty needs at least 2 samples")
    return float(sum(phi(np.var(normalize01(y[:, d])), alpha, tau)
                     for d in range(y.shape[1])))


def total_loss(y: Tensor, model: ModelSpec, times: np.ndarray, cfg: TrainConfig,
               y0: np.ndarray):
    """Weighted sum of the four loss components; returns (total, components).

    Components are reported unweighted, so total == sum(lambda_i * comp_i)
    exactly (zero-weight terms are skipped on the tape, which leaves the
    float value unchanged).
    """
    comps: dict[str, float] = {}
    total = None

    def accumulate(weight, term):
        nonlocal total
        if weight == 0.0:
            return
        weighted = weight * term if isinstance(term, Tensor) else Tensor(weight * term)
        total = weighted if total is None else total + weighted

    ic_gap = ad.row(y, 0) - y0
    loss_o = ad.sqrt(ad.sum_all(ad.square(ic_gap)))
    comps["loss_o"] = loss_o.item()
    accumulate(cfg.lambda_o, loss_o)

    residual = time_derivative(y, times) - model.rhs(y, times)
    loss_f = ad.mean_all(ad.square(residual))
    comps["loss_f"] = loss_f.item()
    accumulate(cfg.lambda_f, loss_f)

    comps["loss_b"] = 0.0  # boundary handling is built into the spatial stencil

    if model.oscillatory and cfg.constraint and cfg.lambda_p > 0:
        loss_p = variance_penalty(y, cfg.alpha, cfg.tau)
        comps["loss_p"] = loss_p.item()
        accumulate(cfg.lambda_p, loss_p)
    else:
        comps["loss_p"] = 0.0

    if total is None:
        total = Tensor(0.0)
    comps["loss_total"] = total.item()
    if not math.isfinite(comps["loss_total"]):
        raise DivergenceError("loss is not finite")
    return total, comps


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_step(params, state: AdamState, lr: float) -> None:
    """Standard bias-corrected Adam update, in place; missing grads are zero."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            continue
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / bias1
        v_hat = state.v[i] / bias2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    config: TrainConfig
    history: list[dict]
    times_train: np.ndarray
    times_test: np.ndarray
    truth_test: np.ndarray
    pred_test: np.ndarray | None
    best_params: dict
    best_nmse: float
    diverged: bool = False
    net: object = None

    @property
    def final_nmse(self) -> float:
        return evaluation.final_nmse([row["test_nmse"] for row in self.history])


def build_network(cfg: TrainConfig, d_out: int, seed):
    if cfg.arch == "sbfnn":
        return network.init_fourier_net(1, d_out, hidden=cfg.hidden, modes=cfg.modes,
                                        depth=cfg.depth, seed=seed,
                                        activation=cfg.activation)
    # the MLP baseline has no adaptive mode; "adaptive" falls back to tanh
    act = cfg.activation if cfg.activation != "adaptive" else "tanh"
    return network.init_mlp([1] + list(cfg.mlp_hidden) + [d_out], seed=seed,
                            activation=act)


def train(cfg: TrainConfig) -> TrainResult:
    """Run one full-batch training job; deterministic given cfg (incl. seed).

    On divergence a DivergenceError is raised with `.partial` holding the
    result so far (history preserved).
    """
    validate_config(cfg)
    model = get_model(cfg.model, cfg.model_params)
    sq = np.random.SeedSequence(cfg.seed)
    s_init, s_train, s_test, s_ic = sq.spawn(4)

    horizon = model.horizon
    times_train = lhs_sample(cfg.train_samples, horizon, s_train)
    times_test = lhs_sample(cfg.test_samples, horizon, s_test)
    y0 = model.ic(s_ic)
    truth_test = oracle.generate_truth(model, times_test, seed=s_ic)

    # the network reads normalized time; the loss differentiates on real time
    x_train = Tensor((times_train / horizon).reshape(-1, 1))
    x_test = Tensor((times_test / horizon).reshape(-1, 1))

    net = build_network(cfg, model.dim, s_init)
    params = net.params()
    state = AdamState.for_params(params)

    history: list[dict] = []
    best_params = {name: t.data.copy() for name, t in net.named_params()}
    best_nmse = math.inf
    pred_test = None

    def evaluate(epoch: int, comps: dict, lr: float):
        nonlocal best_nmse, best_params, pred_test
        pred_test = network.forward(x_test, net).data
        try:
            test_nmse = evaluation.nmse(pred_test, truth_test, exclusion=True)
        except evaluation.MetricUndefinedError:
            test_nmse = math.nan
        history.append({"epoch": epoch, "lr": lr, **comps, "test_nmse": test_nmse})
        if test_nmse < best_nmse:
            best_nmse = test_nmse
            best_params = {name: t.data.copy() for name, t in net.named_params()}

    for epoch in range(cfg.max_epochs):
        lr = lr_at(epoch, cfg.lr_init, cfg.b)
        pred = network.forward(x_train, net)
        try:
            loss, comps = total_loss(pred, model, times_train, cfg, y0)
        except DivergenceError as err:
            partial = TrainResult(config=cfg, history=history, times_train=times_train,
                                  times_test=times_test, truth_test=truth_test,
                                  pred_test=pred_test, best_params=best_params,
                                  best_nmse=best_nmse, diverged=True, net=net)
            raise DivergenceError(f"training diverged at epoch {epoch}",
                                  at=epoch, partial=partial) from err
        ad.backward(loss)
        adam_step(params, state, lr)
        ad.zero_grads(params)
        if epoch % cfg.log_every == 0 or epoch == cfg.max_epochs - 1:
            evaluate(epoch, comps, lr)

    return TrainResult(config=cfg, history=history, times_train=times_train,
                       times_test=times_test, truth_test=truth_test,
                       pred_test=pred_test, best_params=best_params,
                       best_nmse=best_nmse, diverged=False, net=net)


def _train_worker(cfg_dict: dict) -> TrainResult:
    return train(config_from_dict(cfg_dict))


def train_many(configs, max_workers: int | None = None) -> list[TrainResult]:
    """Run independent configs (typically one per seed) concurrently.

    Fan-out is capped by SBFNN_THREADS when set; a single job or a cap of 1
    runs inline, which keeps worker processes out of profiling and tests.
    """
    configs = list(configs)
    env_cap = os.environ.get("SBFNN_THREADS")
    cap = int(env_cap) if env_cap else (os.cpu_count() or 1)
    if max_workers is not None:
        cap = min(cap, max_workers)
    cap = max(1, min(cap, len(configs)))
    if cap == 1 or len(configs) == 1:
        return [train(cfg) for cfg in configs]
    with ProcessPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(_train_worker, [cfg.to_dict() for cfg in configs]))
