import math

import numpy as np
import pytest

from sbfnn import biomodels as bm
from sbfnn import oracle
from sbfnn.autodiff import ContractError
from sbfnn.biomodels import ModelSpec


def toy_model(rhs, dim, horizon=1.0):
    return ModelSpec(name="toy", dim=dim, params={}, rhs=rhs,
                     ic=lambda seed: np.zeros(dim), time_domain=(0.0, horizon),
                     oscillatory=False)


DECAY = toy_model(lambda y, t: -y, 1)
HARMONIC = toy_model(lambda y, t: np.stack([y[:, 1], -y[:, 0]], axis=1), 2,
                     horizon=2 * math.pi)


class TestIntegrateRk4:
    def test_exponential_decay(self):
        out = oracle.integrate_rk4(DECAY, [1.0], [0.0, 1.0], substeps=100)
        assert out[-1, 0] == pytest.approx(math.exp(-1), abs=1e-8)

    def test_sir_conservation_along_trajectory(self):
        model = bm.get_model("sir")
        times = np.linspace(0, 100, 101)
        traj = oracle.integrate_rk4(model, model.ic(0), times, substeps=100)
        totals = traj.sum(axis=1)
        assert np.max(np.abs(totals - 100.0)) < 1e-9

    def test_harmonic_error_scales_as_h4(self):
        # global error of y'' = -y over one period, measured against the
        # analytic solution (cos, -sin), log-log slope 4 +- 0.2
        T = 2 * math.pi
        errs, hs = [], []
        for n in (63, 126, 252):  # h ~ 0.1, 0.05, 0.025
            out = oracle.integrate_rk4(HARMONIC, [1.0, 0.0], [0.0, T], substeps=n)
            errs.append(abs(out[-1, 0] - 1.0) + abs(out[-1, 1] - 0.0))
            hs.append(T / n)
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope == pytest.approx(4.0, abs=0.2)

    def test_rows_align_with_times(self):
        times = np.array([0.0, 0.3, 1.1, 2.0])
        out = oracle.integrate_rk4(DECAY, [2.0], times, substeps=64)
        assert out.shape == (4, 1)
        np.testing.assert_allclose(out[:, 0], 2.0 * np.exp(-times), atol=1e-9)

    def test_divergence_reports_time(self):
        blowup = toy_model(lambda y, t: y * y, 1)
        with pytest.raises(oracle.DivergenceError):
            oracle.integrate_rk4(blowup, [5.0], [0.0, 1.0, 10.0], substeps=4)

    def test_times_must_start_at_zero(self):
        with pytest.raises(ContractError):
            oracle.integrate_rk4(DECAY, [1.0], [1.0, 2.0])

    def test_doubling_substeps_reduces_error_16x(self):
        out1 = oracle.integrate_rk4(DECAY, [1.0], [0.0, 1.0], substeps=8)
        out2 = oracle.integrate_rk4(DECAY, [1.0], [0.0, 1.0], substeps=16)
        e1 = abs(out1[-1, 0] - math.exp(-1))
        e2 = abs(out2[-1, 0] - math.exp(-1))
        assert e1 / e2 == pytest.approx(16.0, rel=0.2)


class TestGenerateTruth:
    def test_rep3_bounded_by_production_over_decay(self):
        model = bm.get_model("rep3")
        times = np.linspace(0, 10, 100)
        traj = oracle.generate_truth(model, times, seed=0)
        assert np.all(traj > 0.0)
        assert np.all(traj <= 10.0 + 1e-12)

    def test_turing1d_pattern_forms_from_perturbation(self):
        model = bm.get_model("turing1d")
        times = np.linspace(0, 10, 21)
        traj = oracle.generate_truth(model, times, seed=7)
        g = model.grid.cells
        var0 = np.var(traj[0, :g])
        var_end = np.var(traj[-1, :g])
        assert var_end > 10.0 * var0

    def test_turing1d_exact_steady_state_stays_homogeneous(self):
        model = bm.get_model("turing1d", {"perturbation": 0.0})
        times = np.linspace(0, 10, 11)
        traj = oracle.generate_truth(model, times, seed=0)
        g = model.grid.cells
        assert np.max(np.abs(traj[-1, :g] - 1.0)) < 1e-8
        assert np.max(np.abs(traj[-1, g:] - 0.9)) < 1e-8

    def test_bit_deterministic(self):
        model = bm.get_model("turing1d", {"grid": (12,)})
        times = np.linspace(0, 1, 5)
        a = oracle.generate_truth(model, times, seed=3)
        b = oracle.generate_truth(model, times, seed=3)
        np.testing.assert_array_equal(a, b)


class TestConvergenceOrder:
    def test_exponential(self):
        order = oracle.convergence_order(DECAY, [1.0], 1.0, coarse_steps=10)
        assert order == pytest.approx(4.0, abs=0.2)

    def test_rep3(self):
        model = bm.get_model("rep3")
        order = oracle.convergence_order(model, model.ic(0), 10.0, coarse_steps=100)
        assert order == pytest.approx(4.0, abs=0.3)

    def test_zero_rhs_sentinel(self):
        frozen = toy_model(lambda y, t: 0.0 * y, 2)
        assert math.isnan(oracle.convergence_order(frozen, [1.0, 2.0], 1.0))


class TestTrajectoryCsv:
    def test_roundtrip_17_digits(self, tmp_path):
        rng = np.random.default_rng(0)
        times = np.sort(rng.uniform(0, 1, size=6))
        traj = rng.normal(size=(6, 3))
        path = tmp_path / "traj.csv"
        oracle.save_trajectory_csv(path, times, traj)
        header = path.read_text().splitlines()[0]
        assert header == "t,dim_0,dim_1,dim_2"
        t2, y2 = oracle.load_trajectory_csv(path)
        np.testing.assert_array_equal(t2, times)
        np.testing.assert_array_equal(y2, traj)
