import numpy as np
import pytest

from modules.errors import ShapeError
from modules.gradcheck import grad_check
from modules.ssm import (
    SERIES_THRESHOLD,
    SSMParams,
    discretize,
    hidden_state_bound,
    init_ssm_params,
    linear_scan,
    selective_params,
    selective_scan,
)
from modules.tensor import Tensor, no_grad


def unrolled(A_bar, B_bar, C, x):
    """h_t = sum_s (prod_{r=s+1..t} A_r) B_s x_s, sem recorrência"""
    length = len(x)
    y = np.zeros(length)
    for t in range(length):
        h = np.zeros(A_bar.shape[1])
        for s in range(t + 1):
            decay = np.prod(A_bar[s + 1:t + 1], axis=0)
            h = h + decay * B_bar[s] * x[s]
        y[t] = C[t] @ h
    return y


def zero_projection_ssm(channels, state_dim, log_delta_bias):
    return SSMParams(
        A_log=Tensor(np.tile(np.log(np.arange(1, state_dim + 1, dtype=float)), (channels, 1))),
        W_B=Tensor(np.zeros((channels, state_dim))),
        W_C=Tensor(np.zeros((channels, state_dim))),
        W_delta=Tensor(np.zeros((channels, channels))),
        log_delta_bias=Tensor(np.full(channels, log_delta_bias)),
    )


class TestDiscretize:
    def test_half_life_step(self):
        out = discretize(np.array([-1.0]), np.array([1.0]), np.log(2.0))
        np.testing.assert_allclose(out.A_bar, [0.5], atol=1e-15)
        np.testing.assert_allclose(out.B_bar, [0.5], atol=1e-15)

    def test_tiny_step_uses_series(self):
        out = discretize(np.array([-1.0, -3.0]), np.array([2.0, 1.0]), 1e-10)
        np.testing.assert_allclose(out.A_bar, [1.0, 1.0], atol=1e-9)
        np.testing.assert_array_equal(out.B_bar, [2e-10, 1e-10])

    @pytest.mark.parametrize("delta", [0.0, -0.1])
    def test_non_positive_delta(self, delta):
        with pytest.raises(ValueError):
            discretize(np.array([-1.0]), np.array([1.0]), delta)

    def test_zero_A_rejected(self):
        with pytest.raises(ValueError):
            discretize(np.array([0.0]), np.array([1.0]), 0.1)

    def test_series_and_closed_form_agree_near_switch(self):
        A = np.array([-1.0])
        B = np.array([1.0])
        # acima do limiar: forma fechada contra o limite em série
        closed = discretize(A, B, 1e-6).B_bar
        np.testing.assert_allclose(closed, 1e-6 * B, rtol=0, atol=1e-10)
        # abaixo do limiar: ramo em série contra a forma fechada calculada à mão
        delta = 0.5 * SERIES_THRESHOLD
        series = discretize(A, B, delta).B_bar
        np.testing.assert_allclose(series, np.expm1(delta * A) / A * B, rtol=0, atol=1e-10)

    def test_stable_A_gives_contracting_A_bar(self, rng):
        for _ in range(50):
            A = -np.exp(rng.normal(size=8))
            out = discretize(A, np.ones(8), float(np.exp(rng.normal())))
            assert np.all((out.A_bar > 0) & (out.A_bar < 1))


class TestLinearScan:
    def test_hand_unrolled(self):
        y = linear_scan(np.full((3, 1), 0.5), np.full((3, 1), 0.5), np.ones((3, 1)), np.ones(3))
        np.testing.assert_allclose(y, [0.5, 0.75, 0.875], atol=1e-15)

    def test_memoryless(self, rng):
        B_bar = rng.normal(size=(6, 3))
        C = rng.normal(size=(6, 3))
        x = rng.normal(size=6)
        y = linear_scan(np.zeros((6, 3)), B_bar, C, x)
        np.testing.assert_allclose(y, np.einsum("tn,tn->t", C, B_bar) * x, atol=1e-14)

    def test_matches_unrolled_recurrence(self, rng):
        for _ in range(100):
            length = int(rng.integers(1, 12))
            state_dim = int(rng.integers(1, 5))
            A_bar = rng.uniform(0.0, 1.0, size=(length, state_dim))
            B_bar = rng.normal(size=(length, state_dim))
            C = rng.normal(size=(length, state_dim))
            x = rng.normal(size=length)
            np.testing.assert_allclose(linear_scan(A_bar, B_bar, C, x), unrolled(A_bar, B_bar, C, x), atol=1e-12)

    def test_length_32(self, rng):
        A_bar = rng.uniform(0.0, 1.0, size=(32, 4))
        B_bar = rng.normal(size=(32, 4))
        C = rng.normal(size=(32, 4))
        x = rng.normal(size=32)
        np.testing.assert_allclose(linear_scan(A_bar, B_bar, C, x), unrolled(A_bar, B_bar, C, x), atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            linear_scan(np.zeros((3, 1)), np.zeros((2, 1)), np.zeros((3, 1)), np.zeros(3))

    def test_initial_state(self):
        y = linear_scan(np.full((1, 1), 0.5), np.zeros((1, 1)), np.ones((1, 1)), np.zeros(1), h0=np.array([4.0]))
        assert y.tolist() == [2.0]

    def test_hidden_state_bounded(self, rng):
        for _ in range(20):
            state_dim = 4
            A = -np.exp(rng.normal(size=state_dim))
            disc = discretize(A, rng.normal(size=state_dim), float(np.exp(rng.normal(-1.0))))
            A_bar = np.tile(disc.A_bar, (256, 1))
            B_bar = np.tile(disc.B_bar, (256, 1))
            x = rng.uniform(-1.0, 1.0, size=256)
            _, states = linear_scan(A_bar, B_bar, np.ones((256, state_dim)), x, return_states=True)
            bound = hidden_state_bound(A_bar, B_bar, x)
            assert np.max(np.abs(states)) <= bound * (1.0 + 1e-12)


class TestSelectiveParams:
    def test_zero_input_and_weights_give_constant_delta(self):
        ssm = zero_projection_ssm(3, 2, log_delta_bias=-2.0)
        B_t, C_t, delta = selective_params(Tensor(np.zeros((5, 3))), ssm)
        np.testing.assert_allclose(delta.data, np.full((5, 3), np.log1p(np.exp(-2.0))), atol=1e-15)
        assert np.all(B_t.data == 0) and np.all(C_t.data == 0)

    def test_delta_positive(self, rng):
        ssm = init_ssm_params(rng, 4, 3)
        _, _, delta = selective_params(Tensor(rng.normal(scale=20.0, size=(1000, 4))), ssm)
        assert np.all(delta.data > 0)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            selective_params(Tensor(np.zeros((4, 3))), init_ssm_params(rng, 4, 2))

    def test_A_is_negative(self, rng):
        ssm = init_ssm_params(rng, 3, 4)
        np.testing.assert_allclose(ssm.A().data[0], [-1.0, -2.0, -3.0, -4.0])


class TestSelectiveScan:
    def test_shape_preserved(self, rng):
        ssm = init_ssm_params(rng, 16, 8)
        with no_grad():
            assert selective_scan(Tensor(rng.normal(size=(64, 16))), ssm).shape == (64, 16)

    def test_batched_shape(self, rng):
        ssm = init_ssm_params(rng, 4, 2)
        with no_grad():
            assert selective_scan(Tensor(rng.normal(size=(3, 7, 4))), ssm).shape == (3, 7, 4)

    def test_causality(self, rng):
        ssm = init_ssm_params(rng, 4, 3)
        u = rng.normal(size=(12, 4))
        perturbed = u.copy()
        perturbed[5:] += rng.normal(size=(7, 4))
        with no_grad():
            y = selective_scan(Tensor(u), ssm).data
            y_perturbed = selective_scan(Tensor(perturbed), ssm).data
        np.testing.assert_array_equal(y[:5], y_perturbed[:5])
        assert not np.array_equal(y[5:], y_perturbed[5:])

    def test_matches_per_channel_linear_scan(self, rng):
        ssm = init_ssm_params(rng, 3, 4)
        u = rng.normal(size=(10, 3))
        with no_grad():
            y = selective_scan(Tensor(u), ssm).data
            B_t, C_t, delta = (t.data for t in selective_params(Tensor(u), ssm))
        A = ssm.A().data
        for c in range(3):
            A_bar = np.exp(delta[:, c:c + 1] * A[c])
            B_bar = np.expm1(delta[:, c:c + 1] * A[c]) / A[c] * B_t
            np.testing.assert_allclose(y[:, c], linear_scan(A_bar, B_bar, C_t, u[:, c]), atol=1e-12)

    def test_fixed_delta_reduces_to_static_ssm(self, rng):
        ssm = init_ssm_params(rng, 2, 3)
        ssm.W_delta = Tensor(np.zeros((2, 2)))
        u = rng.normal(size=(9, 2))
        with no_grad():
            y = selective_scan(Tensor(u), ssm).data
        delta = np.log1p(np.exp(ssm.log_delta_bias.data))
        A = ssm.A().data
        for c in range(2):
            disc = discretize(A[c], np.ones(3), float(delta[c]))
            B_t = u @ ssm.W_B.data
            C_t = u @ ssm.W_C.data
            expected = linear_scan(np.tile(disc.A_bar, (9, 1)), disc.B_bar * B_t, C_t, u[:, c])
            np.testing.assert_allclose(y[:, c], expected, atol=1e-12)

    def test_gradient_wrt_input(self, rng):
        ssm = init_ssm_params(rng, 4, 3)
        weights = rng.normal(size=(8, 4))
        assert grad_check(lambda u: (selective_scan(u, ssm) * weights).sum(), Tensor(rng.normal(size=(8, 4)))) < 1e-4

    def test_gradient_wrt_parameters(self, rng):
        ssm = init_ssm_params(rng, 3, 2)
        u = Tensor(rng.normal(size=(6, 3)))
        weights = rng.normal(size=(6, 3))
        for name in ("A_log", "W_B", "W_C", "W_delta", "log_delta_bias"):
            assert grad_check(lambda _: (selective_scan(u, ssm) * weights).sum(), getattr(ssm, name)) < 1e-4, name
