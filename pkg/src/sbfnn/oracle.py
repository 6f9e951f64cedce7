"""Reference trajectories by classical RK4 with fixed substeps.

This integrator is the ground-truth source for tests and for the test-set
error metric; it is never part of the training loss.  Fixed substepping
(rather than adaptive stepping) keeps every trajectory bit-deterministic
given (model, ic, times, substeps, seed).
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import ContractError
from .biomodels import ModelSpec


class DivergenceError(RuntimeError):
    """Integration or training produced non-finite values.

    `at` is the offending time (integration) or epoch (training); `partial`
    carries whatever result existed before the abort, when available.
    """

    def __init__(self, message: str, at=None, partial=None):
        super().__init__(message)
        self.at = at
        self.partial = partial


def _rk4_span(rhs, y: np.ndarray, t0: float, t1: float, substeps: int) -> np.ndarray:
    h = (t1 - t0) / substeps
    t = t0
    for _ in range(substeps):
        k1 = rhs(y, t)
        k2 = rhs(y + 0.5 * h * k1, t + 0.5 * h)
        k3 = rhs(y + 0.5 * h * k2, t + 0.5 * h)
        k4 = rhs(y + h * k3, t + h)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return y


def integrate_rk4(model: ModelSpec, ic, times, substeps: int = 1) -> np.ndarray:
    """Trajectory rows aligned exactly with `times`; `substeps` RK4 steps
    between each pair of consecutive requested times."""
    times = np.asarray(times, dtype=np.float64)
    if times.size < 1 or times[0] != 0.0:
        raise ContractError("times must start at 0")
    if substeps < 1:
        raise ContractError("substeps must be >= 1")
    y = np.asarray(ic, dtype=np.float64).reshape(1, -1)
    out = np.empty((times.size, y.size))
    out[0] = y[0]
    for i in range(1, times.size):
        y = _rk4_span(model.rhs, y, times[i - 1], times[i], substeps)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"integration diverged at t={times[i]:g}", at=times[i])
        out[i] = y[0]
    return out


def generate_truth(model: ModelSpec, sample_times, seed: int = 0) -> np.ndarray:
    """Ground truth on the given sample times; substeps are sized so no
    interior step exceeds horizon/10000.  The seed only enters through
    stochastic initial conditions (the Turing perturbation)."""
    times = np.asarray(sample_times, dtype=np.float64)
    gaps = np.diff(times)
    if times.size < 2 or np.any(gaps <= 0):
        raise ContractError("sample times must be ascending and start at 0")
    limit = model.horizon / 10_000.0
    substeps = max(1, math.ceil(float(gaps.max()) / limit))
    return integrate_rk4(model, model.ic(seed), times, substeps)


def convergence_order(model: ModelSpec, ic, horizon: float,
                      coarse_steps: int = 100) -> float:
    """Richardson-style slope of the global RK4 error; ~4 for smooth systems.

    Returns nan (sentinel) when the error is at roundoff for every tested
    step, e.g. for a zero right-hand side.
    """
    times = np.array([0.0, horizon])
    ref = integrate_rk4(model, ic, times, substeps=coarse_steps * 16)[-1]
    hs, errs = [], []
    for mult in (1, 2, 4):
        n = coarse_steps * mult
        end = integrate_rk4(model, ic, times, substeps=n)[-1]
        err = float(np.max(np.abs(end - ref)))
        hs.append(horizon / n)
        errs.append(err)
    if max(errs) < 1e-14:
        return float("nan")
    slope, _ = np.polyfit(np.log(hs), np.log(errs), 1)
    return float(slope)


def save_trajectory_csv(path, times, trajectory: np.ndarray) -> None:
    """CSV with header t,dim_0..dim_{D-1}; 17 significant digits."""
    times = np.asarray(times)
    header = "t," + ",".join(f"dim_{d}" for d in range(trajectory.shape[1]))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, row in zip(times, trajectory):
            fh.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")


def load_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    return data[:, 0], data[:, 1:]
