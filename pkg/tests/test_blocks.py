import numpy as np
import pytest

from modules.blocks import (
    downsample,
    init_downsample,
    init_mamba_block,
    init_res_block,
    init_upsample,
    mamba_block,
    res_block,
    upsample,
)
from modules.errors import ShapeError
from modules.functional import conv3d
from modules.gradcheck import grad_check
from modules.params import is_norm_parameter
from modules.scan3d import default_directions
from modules.tensor import Tensor, no_grad


class TestMambaBlock:
    def test_shape_preserved(self, rng):
        p = init_mamba_block(rng, 8, state_dim=4, zero_exit=False)
        with no_grad():
            assert mamba_block(Tensor(rng.normal(size=(8, 4, 4, 4))), p).shape == (8, 4, 4, 4)

    def test_zero_exit_is_identity(self, rng):
        p = init_mamba_block(rng, 4, state_dim=2)
        x = rng.normal(size=(4, 4, 4, 4))
        with no_grad():
            np.testing.assert_array_equal(mamba_block(Tensor(x), p).data, x)

    def test_trained_exit_changes_output(self, rng):
        p = init_mamba_block(rng, 4, state_dim=2, zero_exit=False)
        x = rng.normal(size=(4, 2, 2, 2))
        with no_grad():
            assert not np.allclose(mamba_block(Tensor(x), p).data, x)

    def test_channel_mismatch(self, rng):
        p = init_mamba_block(rng, 4, state_dim=2)
        with pytest.raises(ShapeError):
            mamba_block(Tensor(np.zeros((3, 2, 2, 2))), p)

    def test_hidden_width(self, rng):
        p = init_mamba_block(rng, 4, state_dim=2, expansion=3)
        assert p.channels == 4
        assert p.hidden_channels == 12
        assert p.dw_conv.weight.shape == (12, 1, 3, 3, 3)

    def test_norm_parameters_named(self, rng):
        names = [name for name, _ in init_mamba_block(rng, 2, state_dim=2).named_parameters()]
        assert "ln_in.gain" in names and "ssm.A_log" in names
        assert {n for n in names if is_norm_parameter(n)} == {"ln_in.gain", "ln_in.bias", "ln_post.gain", "ln_post.bias"}

    def test_gradient(self, rng):
        p = init_mamba_block(rng, 4, state_dim=2, zero_exit=False)
        x = Tensor(rng.normal(size=(4, 3, 3, 3)))
        weights = rng.normal(size=(4, 3, 3, 3))
        assert grad_check(lambda v: (mamba_block(v, p) * weights).sum(), x) < 1e-4

    def test_gradient_wrt_ssm_parameters(self, rng):
        p = init_mamba_block(rng, 2, state_dim=2, zero_exit=False)
        x = Tensor(rng.normal(size=(2, 2, 2, 2)))
        weights = rng.normal(size=(2, 2, 2, 2))
        directions = default_directions(2)
        f = lambda _: (mamba_block(x, p, directions) * weights).sum()  # noqa: E731
        assert grad_check(f, p.ssm.A_log) < 1e-4
        assert grad_check(f, p.dw_conv.weight) < 1e-4


class TestResBlock:
    def test_zero_exit_identity_shortcut(self, rng):
        p = init_res_block(rng, 4, 4)
        assert p.shortcut is None
        x = rng.normal(size=(4, 3, 3, 3))
        with no_grad():
            np.testing.assert_array_equal(res_block(Tensor(x), p).data, x)

    def test_channel_change_engages_projection(self, rng):
        p = init_res_block(rng, 4, 8)
        assert p.shortcut is not None
        assert p.shortcut.weight.shape == (8, 4, 1, 1, 1)
        with no_grad():
            assert res_block(Tensor(rng.normal(size=(4, 2, 2, 2))), p).shape == (8, 2, 2, 2)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            res_block(Tensor(np.zeros((3, 2, 2, 2))), init_res_block(rng, 4, 4))

    def test_gradient(self, rng):
        p = init_res_block(rng, 2, 2, zero_exit=False)
        x = Tensor(rng.normal(size=(2, 3, 3, 3)))
        weights = rng.normal(size=(2, 3, 3, 3))
        assert grad_check(lambda v: (res_block(v, p) * weights).sum(), x) < 1e-4


class TestResampling:
    def test_downsample_shape(self, rng):
        with no_grad():
            out = downsample(Tensor(rng.normal(size=(4, 8, 8, 8))), init_downsample(rng, 4))
        assert out.shape == (8, 4, 4, 4)

    def test_upsample_shape(self, rng):
        with no_grad():
            out = upsample(Tensor(rng.normal(size=(8, 4, 4, 4))), init_upsample(rng, 8))
        assert out.shape == (4, 8, 8, 8)

    def test_odd_extent_rejected(self, rng):
        with pytest.raises(ShapeError):
            downsample(Tensor(np.zeros((2, 3, 4, 4))), init_downsample(rng, 2))

    def test_odd_channels_rejected(self, rng):
        with pytest.raises(ShapeError):
            init_upsample(rng, 3)


class TestBlockProperties:
    def test_finite_on_bounded_inputs(self, rng):
        directions = default_directions(2)
        for _ in range(1000):
            x = Tensor(rng.uniform(-10.0, 10.0, size=(2, 2, 2, 2)))
            mamba = init_mamba_block(rng, 2, state_dim=2, zero_exit=False)
            res = init_res_block(rng, 2, 4, zero_exit=False)
            with no_grad():
                y = mamba_block(x, mamba, directions)
                y = res_block(y, res)
                down = downsample(y, init_downsample(rng, 4))
                up = upsample(down, init_upsample(rng, 8))
            for out in (y, down, up):
                assert np.all(np.isfinite(out.data))

    def test_initial_cascade_reduces_to_resampling(self, rng):
        """Blocos recém-inicializados somem: sobra só a reamostragem"""
        directions = default_directions(2)
        x = Tensor(rng.normal(size=(2, 4, 4, 4)))
        down_p = init_downsample(rng, 2)
        up_p = init_upsample(rng, 4)
        mamba = init_mamba_block(rng, 4, state_dim=2)
        res = init_res_block(rng, 4, 4)
        with no_grad():
            reference = upsample(downsample(x, down_p), up_p)
            cascade = upsample(res_block(mamba_block(downsample(x, down_p), mamba, directions), res), up_p)
        np.testing.assert_array_equal(cascade.data, reference.data)

    def test_initial_projection_block_is_shortcut(self, rng):
        p = init_res_block(rng, 2, 4)
        x = Tensor(rng.normal(size=(2, 3, 3, 3)))
        with no_grad():
            expected = conv3d(x, p.shortcut.weight, p.shortcut.bias)
            np.testing.assert_array_equal(res_block(x, p).data, expected.data)
