"""The six dynamics models: right-hand sides, parameters, grids, initial states.

Every right-hand side is written against batched (N, D) state arrays and a
tiny dispatch layer (`_cols`, `_hstack`, `_lap`), so the same code path
serves the numerical integrator (numpy input) and the training residual
(tape-tensor input, gradients flowing through).

State layouts:
  rep3     (P_lacI, P_tetR, P_cI)
  rep6     (M_lacI, M_tetR, M_cI, P_lacI, P_tetR, P_cI)
  sir      (S, I, R)
  asir     (S_1..S_n, I_1..I_n, R_1..R_n), blocked by compartment
  turing   (U flattened row-major, then V), grid per ModelSpec
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor, _make


@dataclass(frozen=True)
class SpatialGrid:
    dims: tuple[int, ...]
    spacing: float = 1.0
    boundary: str = "neumann"

    @property
    def cells(self) -> int:
        return int(np.prod(self.dims))


@dataclass(frozen=True)
class ModelSpec:
    name: str
    dim: int
    params: dict
    rhs: Callable
    ic: Callable  # seed -> (dim,) array
    time_domain: tuple[float, float]
    oscillatory: bool
    grid: SpatialGrid | None = None
    epochs: int = 50_000
    lr_decay_b: float = 1000.0
    train_samples: int = 100

    @property
    def horizon(self) -> float:
        return self.time_domain[1]


# ---------------------------------------------------------------------------
# numpy/tensor dispatch helpers
# ---------------------------------------------------------------------------

def _cols(x, idx):
    if isinstance(x, Tensor):
        return ad.cols(x, idx)
    return x[:, idx]


def _hstack(parts):
    if isinstance(parts[0], Tensor):
        return ad.concat_cols(parts)
    return np.concatenate(parts, axis=1)


def _matmul(x, const):
    if isinstance(x, Tensor):
        return ad.matmul(x, Tensor(const))
    return x @ const


# ---------------------------------------------------------------------------
# Laplacian with zero-flux (reflected ghost cell) boundaries
# ---------------------------------------------------------------------------

def _lap1d_np(f: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(f)
    out[..., 1:-1] = f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]
    out[..., 0] = f[..., 1] - f[..., 0]
    out[..., -1] = f[..., -2] - f[..., -1]
    return out / (h * h)


def _lap_grid_np(f: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Stencil over the flattened grid in the last axis of f."""
    if len(grid.dims) == 1:
        return _lap1d_np(f, grid.spacing)
    gx, gy = grid.dims
    shaped = f.reshape(f.shape[:-1] + (gx, gy))
    out = _lap1d_np(shaped, grid.spacing)
    out = out + np.moveaxis(_lap1d_np(np.moveaxis(shaped, -1, -2), grid.spacing), -1, -2)
    return out.reshape(f.shape)


def laplacian(field, grid: SpatialGrid):
    """Discrete Laplacian of a grid-shaped field: 3-point (1D) / 5-point (2D)
    stencil over spacing^2, zero-flux Neumann boundaries via reflected ghosts."""
    if any(d < 3 for d in grid.dims):
        raise ContractError(f"laplacian needs every grid dim >= 3, got {grid.dims}")
    field = np.asarray(field, dtype=np.float64)
    if field.shape != grid.dims:
        raise ContractError(f"field shape {field.shape} does not match grid {grid.dims}")
    return _lap_grid_np(field.reshape(1, -1), grid).reshape(grid.dims)


def _lap(x, grid: SpatialGrid):
    """Batched Laplacian over the last axis (flattened grid); self-adjoint,
    so the backward rule is the stencil itself."""
    if any(d < 3 for d in grid.dims):
        raise ContractError(f"laplacian needs every grid dim >= 3, got {grid.dims}")
    if isinstance(x, Tensor):
        out = _lap_grid_np(x.data, grid)

        def vjp(g):
            return (_lap_grid_np(g, grid),)

        return _make(out, (x,), vjp, "laplacian")
    return _lap_grid_np(x, grid)


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def rhs_rep3(p, t, beta: float, n: int):
    # dP_i = beta / (1 + P_j^n) - P_i, repression cycle lacI<-cI, tetR<-lacI, cI<-tetR
    pj = _cols(p, (2, 0, 1))
    return beta / (1.0 + pj ** n) - p


def rhs_rep6(state, t, beta: float, n: int, alpha: float, alpha0: float):
    m = _cols(state, (0, 1, 2))
    p = _cols(state, (3, 4, 5))
    pj = _cols(state, (5, 3, 4))
    dm = alpha / (1.0 + pj ** n) + alpha0 - m
    dp = beta * (m - p)
    return _hstack([dm, dp])


def rhs_sir(state, t, beta: float, gamma: float, pop: float):
    s = _cols(state, (0,))
    i = _cols(state, (1,))
    infection = (beta / pop) * s * i
    return _hstack([-infection, infection - gamma * i, gamma * i])


def rhs_asir(state, t, beta: float, gamma: float, pop: float, contact: np.ndarray):
    n = contact.shape[0]
    if contact.shape != (n, n):
        raise ContractError(f"contact matrix must be square, got {contact.shape}")
    s = _cols(state, range(n))
    i = _cols(state, range(n, 2 * n))
    force = _matmul(i, contact.T)  # row i of output: sum_j M_ij I_j
    infection = (beta / pop) * s * force
    return _hstack([-infection, infection - gamma * i, gamma * i])


def rhs_turing(state, t, c1: float, c2: float, cm1: float, c3: float,
               d1: float, d2: float, grid: SpatialGrid):
    g = grid.cells
    u = _cols(state, range(g))
    v = _cols(state, range(g, 2 * g))
    uuv = u ** 2 * v
    du = c1 - cm1 * u + uuv * c3 + d1 * _lap(u, grid)
    dv = c2 - c3 * uuv + d2 * _lap(v, grid)
    return _hstack([du, dv])


# ---------------------------------------------------------------------------
# model registry
# ---------------------------------------------------------------------------

def load_contact_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    mat = np.asarray(rows, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ContractError(f"contact matrix in {path} is not square: {mat.shape}")
    return mat


def _default_contact(n: int) -> np.ndarray:
    # stronger contact within a group than across groups
    return np.ones((n, n)) + 4.0 * np.eye(n)


def _turing_steady_state(params: dict) -> tuple[float, float]:
    u_star = params["c1"] + params["c2"]
    v_star = params["c2"] / (params["c3"] * u_star ** 2)
    return u_star, v_star


def _build_rep3(params: dict) -> ModelSpec:
    p = {"beta": 10.0, "n": 3, **params}
    ic = np.asarray(p.pop("ic", (1.0, 1.5, 2.0)), dtype=np.float64)
    return ModelSpec(
        name="rep3", dim=3, params=p,
        rhs=lambda y, t, _p=p: rhs_rep3(y, t, _p["beta"], _p["n"]),
        ic=lambda seed: ic.copy(),
        time_domain=(0.0, 10.0), oscillatory=True,
        epochs=50_000, lr_decay_b=1000.0, train_samples=100)


def _build_rep6(params: dict) -> ModelSpec:
    p = {"beta": 10.0, "n": 3, "alpha": 10.0, "alpha0": 1e-5, **params}
    ic = np.asarray(p.pop("ic", (1.0, 1.2, 1.5, 2.0, 1.0, 3.0)), dtype=np.float64)
    return ModelSpec(
        name="rep6", dim=6, params=p,
        rhs=lambda y, t, _p=p: rhs_rep6(y, t, _p["beta"], _p["n"], _p["alpha"], _p["alpha0"]),
        ic=lambda seed: ic.copy(),
        time_domain=(0.0, 20.0), oscillatory=True,
        epochs=50_000, lr_decay_b=1000.0, train_samples=200)


def _build_sir(params: dict) -> ModelSpec:
    p = {"beta": 0.01, "gamma": 0.05, "pop": 100.0, **params}
    ic = np.asarray(p.pop("ic", (99.0, 1.0, 0.0)), dtype=np.float64)
    return ModelSpec(
        name="sir", dim=3, params=p,
        rhs=lambda y, t, _p=p: rhs_sir(y, t, _p["beta"], _p["gamma"], _p["pop"]),
        ic=lambda seed: ic.copy(),
        time_domain=(0.0, 100.0), oscillatory=False,
        epochs=20_000, lr_decay_b=1000.0, train_samples=100)


def _build_asir(params: dict) -> ModelSpec:
    p = {"beta": 0.01, "gamma": 0.05, "pop": 100.0, "groups": 5, **params}
    n = int(p["groups"])
    contact = p.get("contact")
    if contact is None:
        contact = _default_contact(n)
    elif isinstance(contact, (str,)):
        contact = load_contact_matrix(contact)
    else:
        contact = np.asarray(contact, dtype=np.float64)
    if contact.shape != (n, n):
        raise ContractError(f"contact matrix {contact.shape} does not match {n} groups")
    p["contact"] = contact
    per_group = p.pop("ic", (19.8, 0.2, 0.0))
    ic = np.concatenate([np.full(n, per_group[0]), np.full(n, per_group[1]),
                         np.full(n, per_group[2])])
    return ModelSpec(
        name="asir", dim=3 * n, params=p,
        rhs=lambda y, t, _p=p: rhs_asir(y, t, _p["beta"], _p["gamma"], _p["pop"], _p["contact"]),
        ic=lambda seed: ic.copy(),
        time_domain=(0.0, 100.0), oscillatory=False,
        epochs=30_000, lr_decay_b=1000.0, train_samples=100)


def _build_turing(params: dict, dims: tuple[int, ...], horizon: float,
                  name: str, train_samples: int) -> ModelSpec:
    p = {"c1": 0.1, "c2": 0.9, "cm1": 1.0, "c3": 1.0, "d1": 1.0, "d2": 40.0, **params}
    grid_dims = tuple(int(d) for d in p.pop("grid", dims))
    grid = SpatialGrid(dims=grid_dims, spacing=float(p.pop("spacing", 1.0)))
    amp = float(p.pop("perturbation", 0.1))
    u_star, v_star = _turing_steady_state(p)

    def ic(seed):
        rng = np.random.default_rng(seed)
        g = grid.cells
        u = u_star + rng.uniform(-amp, amp, size=g)
        v = v_star + rng.uniform(-amp, amp, size=g)
        return np.concatenate([u, v])

    return ModelSpec(
        name=name, dim=2 * grid.cells, params=p,
        rhs=lambda y, t, _p=p, _g=grid: rhs_turing(
            y, t, _p["c1"], _p["c2"], _p["cm1"], _p["c3"], _p["d1"], _p["d2"], _g),
        ic=ic,
        time_domain=(0.0, horizon), oscillatory=False, grid=grid,
        epochs=5_000, lr_decay_b=100.0, train_samples=train_samples)


MODEL_NAMES = ("rep3", "rep6", "sir", "asir", "turing1d", "turing2d")


def get_model(name: str, overrides: dict | None = None) -> ModelSpec:
    """Build a model by name; `overrides` replaces parameter defaults
    (and for Turing models may set `grid`, `spacing`, `perturbation`)."""
    params = dict(overrides or {})
    if name == "rep3":
        return _build_rep3(params)
    if name == "rep6":
        return _build_rep6(params)
    if name == "sir":
        return _build_sir(params)
    if name == "asir":
        return _build_asir(params)
    if name == "turing1d":
        return _build_turing(params, (100,), 10.0, "turing1d", train_samples=50)
    if name == "turing2d":
        return _build_turing(params, (25, 25), 2.0, "turing2d", train_samples=25)
    raise ContractError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
