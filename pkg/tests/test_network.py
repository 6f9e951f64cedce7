import math

import numpy as np
import pytest

from sbfnn import autodiff as ad
from sbfnn import network as nn
from sbfnn.autodiff import Tensor


def naive_layer(z: np.ndarray, w_re, w_im, c_w, c_b, modes: int,
                act=np.tanh) -> np.ndarray:
    """Straight-line Fourier layer: explicit O(n^2) DFT and mode loops (oracle)."""
    n, h = z.shape
    m = n // 2 + 1
    spec = np.zeros((m, h), dtype=complex)
    for k in range(m):
        for j in range(n):
            spec[k] += z[j] * np.exp(-2j * np.pi * j * k / n)
    mixed = np.zeros((m, h), dtype=complex)
    for k in range(min(modes, m)):
        mixed[k] = (w_re[:, :, k] + 1j * w_im[:, :, k]) @ spec[k]
    full = np.zeros((n, h), dtype=complex)
    full[:m] = mixed
    for k in range(1, (n - 1) // 2 + 1):
        full[n - k] = np.conj(mixed[k])
    back = np.zeros((n, h))
    for j in range(n):
        acc = np.zeros(h, dtype=complex)
        for k in range(n):
            acc += full[k] * np.exp(2j * np.pi * j * k / n)
        back[j] = acc.real / n
    return act(back + z @ c_w + c_b)


class TestActivations:
    def test_origin_values(self):
        for kind in ("tanh", "relu", "gelu", "elu", "sin"):
            assert nn.activation_eval(kind, Tensor([0.0])).item() == pytest.approx(0.0, abs=1e-15)

    def test_softplus_at_zero(self):
        assert nn.activation_eval("softplus", Tensor([0.0])).item() == pytest.approx(math.log(2), abs=1e-12)

    def test_gelu_at_one(self):
        # x * Phi_normal(1), with Phi evaluated by numeric quadrature (oracle)
        from scipy.integrate import quad
        phi1 = quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), -20, 1.0)[0]
        got = nn.activation_eval("gelu", Tensor([1.0])).item()
        assert got == pytest.approx(1.0 * phi1, abs=1e-9)
        assert got == pytest.approx(0.841345, abs=1e-6)

    def test_unknown_kind(self):
        with pytest.raises(ad.ContractError):
            nn.activation_eval("swish", Tensor([0.0]))

    def test_elu_negative_branch(self):
        got = nn.activation_eval("elu", Tensor([-1.0])).item()
        assert got == pytest.approx(math.exp(-1) - 1, abs=1e-12)

    def test_sin_uses_beta(self):
        got = nn.activation_eval("sin", Tensor([2.0]), beta=0.5).item()
        assert got == pytest.approx(math.sin(1.0), abs=1e-12)

    @pytest.mark.parametrize("kind", nn.ACTIVATIONS)
    def test_gradients(self, kind):
        rng = np.random.default_rng(hash(kind) % 2**32)
        for _ in range(5):
            x0 = rng.uniform(0.2, 2.0, size=4) * rng.choice([-1.0, 1.0], size=4)
            err = ad.grad_check(
                lambda x: ad.sum_all(nn.activation_eval(kind, x, beta=1.3)), Tensor(x0))
            assert err < 1e-5


class TestAdaptiveMix:
    def test_zero_logits_plain_average(self):
        rng = np.random.default_rng(5)
        x0 = rng.normal(size=(3, 2))
        got = nn.adaptive_mix(Tensor(x0), Tensor(np.zeros(6)), Tensor(1.0)).data
        want = sum(nn.activation_eval(k, Tensor(x0), 1.0).data for k in nn.ACTIVATIONS) / 6
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_saturated_logits_reduce_to_single_candidate(self):
        rng = np.random.default_rng(6)
        x0 = rng.normal(size=(4, 3))
        for j, kind in enumerate(nn.ACTIVATIONS):
            r = np.full(6, -50.0)
            r[j] = 50.0
            got = nn.adaptive_mix(Tensor(x0), Tensor(r), Tensor(1.0)).data
            want = nn.activation_eval(kind, Tensor(x0), 1.0).data
            assert np.max(np.abs(got - want)) < 1e-9

    def test_value_at_zero_uniform_weights(self):
        got = nn.adaptive_mix(Tensor([[0.0]]), Tensor(np.zeros(6)), Tensor(1.0)).item()
        assert got == pytest.approx(math.log(2) / 6, abs=1e-12)
        assert got == pytest.approx(0.115525, abs=1e-6)

    def test_softmax_properties(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            r = rng.normal(scale=3.0, size=6)
            w = nn.softmax_weights(Tensor(r)).data
            assert abs(w.sum() - 1.0) < 1e-12
            assert np.all(w > 0)
            assert np.argmax(w) == np.argmax(r)

    def test_gradients_flow_to_all_inputs(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
        r = Tensor(rng.normal(size=6), requires_grad=True)
        beta = Tensor(1.2, requires_grad=True)
        ad.backward(ad.sum_all(nn.adaptive_mix(x, r, beta)))
        assert x.grad is not None and np.any(x.grad != 0)
        assert r.grad is not None and np.any(r.grad != 0)
        assert beta.grad is not None and beta.grad != 0


class TestFourierLayer:
    def test_passthrough_with_relu(self):
        h, n = 3, 6
        layer = nn.FourierLayerParams(
            w_re=Tensor(np.zeros((h, h, 2))), w_im=Tensor(np.zeros((h, h, 2))),
            c_w=Tensor(np.eye(h)), c_b=Tensor(np.zeros(h)),
            r=Tensor(np.zeros(6)), beta_sin=Tensor(1.0))
        z = np.abs(np.random.default_rng(9).normal(size=(n, h)))
        out = nn.fourier_layer_forward(Tensor(z), layer, modes=2, activation="relu")
        np.testing.assert_allclose(out.data, z, atol=1e-12)

    def test_constant_output_when_everything_zero(self):
        h, n = 2, 5
        layer = nn.FourierLayerParams(
            w_re=Tensor(np.zeros((h, h, 2))), w_im=Tensor(np.zeros((h, h, 2))),
            c_w=Tensor(np.zeros((h, h))), c_b=Tensor(np.zeros(h)),
            r=Tensor(np.zeros(6)), beta_sin=Tensor(1.0))
        z = np.random.default_rng(10).normal(size=(n, h))
        out = nn.fourier_layer_forward(Tensor(z), layer, modes=2).data
        assert np.max(np.abs(out - out[0])) < 1e-12

    def test_matches_naive_reimplementation(self):
        rng = np.random.default_rng(11)
        n, h, modes = 8, 4, 3
        z = rng.normal(size=(n, h))
        w_re = rng.normal(size=(h, h, modes))
        w_im = rng.normal(size=(h, h, modes))
        c_w = rng.normal(size=(h, h))
        c_b = rng.normal(size=h)
        layer = nn.FourierLayerParams(
            w_re=Tensor(w_re), w_im=Tensor(w_im), c_w=Tensor(c_w), c_b=Tensor(c_b),
            r=Tensor(np.zeros(6)), beta_sin=Tensor(1.0))
        got = nn.fourier_layer_forward(Tensor(z), layer, modes, activation="tanh").data
        want = naive_layer(z, w_re, w_im, c_w, c_b, modes)
        assert np.max(np.abs(got - want)) < 1e-9

    def test_channel_mismatch(self):
        layer = nn.FourierLayerParams(
            w_re=Tensor(np.zeros((3, 3, 2))), w_im=Tensor(np.zeros((3, 3, 2))),
            c_w=Tensor(np.eye(3)), c_b=Tensor(np.zeros(3)),
            r=Tensor(np.zeros(6)), beta_sin=Tensor(1.0))
        with pytest.raises(ad.ContractError):
            nn.fourier_layer_forward(Tensor(np.zeros((4, 2))), layer, 2)


class TestFourierNet:
    def test_depth_zero_is_composed_affine(self):
        net = nn.init_fourier_net(1, 2, hidden=4, modes=3, depth=0, seed=3)
        x = np.linspace(0, 1, 5).reshape(-1, 1)
        got = nn.fnn_forward(Tensor(x), net).data
        want = (x @ net.lift_w.data + net.lift_b.data) @ net.proj_w.data + net.proj_b.data
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_output_shape(self):
        net = nn.init_fourier_net(1, 3, hidden=8, modes=4, depth=2, seed=0)
        out = nn.fnn_forward(Tensor(np.linspace(0, 1, 11).reshape(-1, 1)), net)
        assert out.shape == (11, 3)

    def test_deterministic_given_inputs(self):
        net = nn.init_fourier_net(1, 3, hidden=8, modes=4, depth=2, seed=1)
        x = Tensor(np.linspace(0, 1, 9).reshape(-1, 1))
        a = nn.fnn_forward(x, net).data
        b = nn.fnn_forward(x, net).data
        np.testing.assert_array_equal(a, b)

    def test_matches_naive_stack(self):
        # whole net vs an explicit loop reimplementation, adaptive activation off
        rng = np.random.default_rng(12)
        net = nn.init_fourier_net(1, 2, hidden=4, modes=3, depth=2, seed=4,
                                  activation="tanh")
        x = rng.normal(size=(8, 1))
        z = x @ net.lift_w.data + net.lift_b.data
        for layer in net.layers:
            z = naive_layer(z, layer.w_re.data, layer.w_im.data,
                            layer.c_w.data, layer.c_b.data, net.modes)
        want = z @ net.proj_w.data + net.proj_b.data
        got = nn.fnn_forward(Tensor(x), net).data
        assert np.max(np.abs(got - want)) < 1e-9

    def test_shape_mismatch(self):
        net = nn.init_fourier_net(1, 3, hidden=4, modes=3, depth=1, seed=0)
        with pytest.raises(ad.ContractError):
            nn.fnn_forward(Tensor(np.zeros((5, 2))), net)

    def test_parameter_gradients_every_group(self):
        # grad check at 1e-4 on a T=8, H=4 instance, for every parameter group
        rng = np.random.default_rng(13)
        net = nn.init_fourier_net(1, 2, hidden=4, modes=3, depth=2, seed=5)
        x = Tensor(rng.uniform(0, 1, size=(8, 1)))
        w = rng.normal(size=(8, 2))

        def loss():
            return ad.sum_all(ad.mul(nn.fnn_forward(x, net), Tensor(w)))

        for name, tensor in net.named_params():
            err = ad.grad_check_params(loss, [tensor], step=1e-5)
            assert err < 1e-4, f"{name}: {err}"


class TestMlp:
    def test_zero_weights_broadcast_bias(self):
        net = nn.init_mlp([2, 3], seed=0)
        net.weights[0].data[:] = 0.0
        net.biases[0].data[:] = [1.0, 2.0, 3.0]
        out = nn.mlp_forward(Tensor(np.random.default_rng(1).normal(size=(4, 2))), net)
        np.testing.assert_allclose(out.data, np.tile([1.0, 2.0, 3.0], (4, 1)))

    def test_single_layer_tanh(self):
        net = nn.init_mlp([2, 2, 2], seed=2)
        x = np.random.default_rng(3).normal(size=(3, 2))
        z = np.tanh(x @ net.weights[0].data + net.biases[0].data)
        want = z @ net.weights[1].data + net.biases[1].data
        np.testing.assert_allclose(nn.mlp_forward(Tensor(x), net).data, want, atol=1e-12)

    def test_gradient_two_layer(self):
        rng = np.random.default_rng(4)
        net = nn.init_mlp([1, 5, 2], seed=6)
        x = Tensor(rng.normal(size=(6, 1)))
        w = rng.normal(size=(6, 2))

        def loss():
            return ad.sum_all(ad.mul(nn.mlp_forward(x, net), Tensor(w)))

        assert ad.grad_check_params(loss, net.params()) < 1e-6


class TestInit:
    def test_same_seed_bit_identical(self):
        a = nn.init_fourier_net(1, 3, hidden=8, modes=5, depth=2, seed=42)
        b = nn.init_fourier_net(1, 3, hidden=8, modes=5, depth=2, seed=42)
        for (_, ta), (_, tb) in zip(a.named_params(), b.named_params()):
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_different_seed_differs(self):
        a = nn.init_fourier_net(1, 3, seed=0)
        b = nn.init_fourier_net(1, 3, seed=1)
        assert np.any(a.lift_w.data != b.lift_w.data)

    def test_uniform_activation_weights_at_init(self):
        net = nn.init_fourier_net(1, 3, seed=0)
        w = nn.softmax_weights(net.layers[0].r).data
        np.testing.assert_allclose(w, np.full(6, 1 / 6), atol=1e-15)
        assert net.layers[0].beta_sin.item() == 1.0

    def test_param_count_stable_across_seeds(self):
        counts = {nn.init_fourier_net(1, 3, seed=s).param_count() for s in range(4)}
        assert len(counts) == 1

    def test_default_config_param_count_reported(self):
        net = nn.init_fourier_net(1, 3, hidden=16, modes=12, depth=4, seed=0)
        # lift 32, four layers of (2*16*16*12 + 16*16+16 + 6 + 1), projection 51
        per_layer = 2 * 16 * 16 * 12 + 16 * 16 + 16 + 6 + 1
        assert net.param_count() == 32 + 4 * per_layer + 16 * 3 + 3


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        net = nn.init_fourier_net(1, 3, hidden=4, modes=3, depth=2, seed=7)
        x = Tensor(np.linspace(0, 1, 6).reshape(-1, 1))
        before = nn.fnn_forward(x, net).data
        path = tmp_path / "ckpt.json"
        nn.save_checkpoint(path, net, seed=7, cfg={"model": "rep3"})
        loaded, doc = nn.load_checkpoint(path)
        after = nn.fnn_forward(x, loaded).data
        np.testing.assert_array_equal(before, after)
        assert doc["param_count"] == net.param_count()
        assert doc["config_hash"] == nn.config_hash({"model": "rep3"})

    def test_mlp_roundtrip(self, tmp_path):
        net = nn.init_mlp([1, 4, 2], seed=3)
        path = tmp_path / "mlp.json"
        nn.save_checkpoint(path, net, seed=3, cfg={})
        loaded, _ = nn.load_checkpoint(path)
        x = Tensor(np.zeros((2, 1)))
        np.testing.assert_array_equal(nn.mlp_forward(x, net).data,
                                      nn.mlp_forward(x, loaded).data)
