"""End-to-end gradients of the composite loss through both networks."""

import numpy as np
import pytest

from deblursdi.denoiser import Denoiser
from deblursdi.engine import SDIConfig, _LossEvaluator, composite_loss, kernel_regularizer
from deblursdi.kernel_gen import KernelGenerator, sample_latent

from oracles import central_difference, conv_reference


def _setup(kernel_reg="l1", boundary="circular", gen_mode="diffusion"):
    config = SDIConfig(
        kernel_size=5,
        T=2,
        S=1,
        base_channels=8,
        hidden_dim=64,
        num_hidden=2,
        gen_mode=gen_mode,
        boundary=boundary,
        kernel_reg=kernel_reg,
        lambda_k=2e-3,
    )
    denoiser = Denoiser(1, base_channels=8, seed=31)
    generator = KernelGenerator(
        gen_mode, 5, hidden_dim=64, num_hidden=2, seed=32
    )
    rng = np.random.default_rng(33)
    xhat = rng.standard_normal((16, 16, 1))
    zhat = rng.standard_normal(generator.latent_dim)
    y = rng.uniform(0, 1, size=(16, 16, 1))
    return config, denoiser, generator, xhat, zhat, y


def test_composite_loss_matches_brute_force_convolution():
    rng = np.random.default_rng(34)
    x = rng.uniform(0, 1, size=(8, 8, 1))
    k = rng.uniform(0, 1, size=(3, 3))
    k /= k.sum()
    y = rng.uniform(0, 1, size=(8, 8, 1))
    for boundary in ("circular", "reflect"):
        resid = conv_reference(x, k, boundary) - y
        want = float(np.sum(resid * resid)) + 2e-3 * float(np.abs(k).sum())
        got = composite_loss(x, k, y, 2e-3, boundary=boundary, kernel_reg="l1")
        assert abs(got - want) < 1e-10


def test_l1_regularizer_is_inert_on_the_simplex():
    # The softmax head already fixes sum(k) = 1, so the l1 term adds a
    # constant 1 to the loss and a constant gradient that cancels in the
    # softmax backward. Kernels away from the simplex still feel it.
    rng = np.random.default_rng(35)
    k = rng.uniform(0.01, 1, size=(5, 5))
    k /= k.sum()
    value, dk, dlogits = kernel_regularizer(k, None, "l1")
    assert abs(value - 1.0) < 1e-12
    np.testing.assert_array_equal(dk, np.ones((5, 5)))
    assert dlogits is None
    # Constant dk vanishes through softmax: k * (1 - sum(k * 1)) = 0.
    kf = k.reshape(-1)
    df = dk.reshape(-1)
    backprop = kf * (df - float(df @ kf))
    np.testing.assert_allclose(backprop, 0.0, atol=1e-15)


def test_regularizer_kinds():
    rng = np.random.default_rng(36)
    k = rng.uniform(0.01, 1, size=(3, 3))
    k /= k.sum()
    logits = rng.standard_normal(9)

    value, dk, _ = kernel_regularizer(k, logits, "sqrt-sparsity")
    assert abs(value - np.sqrt(k.reshape(-1) + 1e-12).sum()) < 1e-12
    for idx in [(0, 0), (1, 2)]:
        num = central_difference(
            lambda: kernel_regularizer(k, logits, "sqrt-sparsity")[0], k, idx, step=1e-7
        )
        assert abs(dk[idx] - num) < 1e-3 * max(1.0, abs(num))

    value, dk, dlogits = kernel_regularizer(k, logits, "l1-presoftmax")
    assert abs(value - np.abs(logits).sum()) < 1e-12
    assert dk is None
    np.testing.assert_array_equal(dlogits, np.sign(logits))

    value, dk, dlogits = kernel_regularizer(k, logits, "none")
    assert value == 0.0 and dk is None and dlogits is None


@pytest.mark.parametrize("kernel_reg", ["l1", "sqrt-sparsity", "l1-presoftmax"])
def test_full_loss_gradients_match_finite_differences(kernel_reg):
    config, denoiser, generator, xhat, zhat, y = _setup(kernel_reg=kernel_reg)
    ev = _LossEvaluator(denoiser, generator, config)

    def loss():
        x_den, kernel = ev.forward(xhat, zhat)
        return ev.loss_value(x_den, kernel, y)[0]

    denoiser.zero_grads()
    generator.zero_grads()
    got_loss = ev.loss_and_grads(xhat, zhat, y)
    assert np.isfinite(got_loss)

    rng = np.random.default_rng(37)
    dparams = dict(denoiser.params())
    for name in ("enc1.b1.conv.w", "head.b", "dec1.b2.norm.gamma"):
        param, grad = dparams[name]
        for _ in range(2):
            idx = tuple(rng.integers(0, s) for s in param.shape)
            num = central_difference(loss, param, idx, step=1e-5)
            assert abs(grad[idx] - num) <= 5e-4 * max(1.0, abs(num)), f"denoiser {name}{idx}"
    gparams = dict(generator.params())
    for name in ("linear0.w", "linear2.b"):
        param, grad = gparams[name]
        for _ in range(3):
            idx = tuple(rng.integers(0, s) for s in param.shape)
            num = central_difference(loss, param, idx, step=1e-5)
            assert abs(grad[idx] - num) <= 5e-4 * max(1.0, abs(num)), f"generator {name}{idx}"


def test_reflect_boundary_gradients():
    config, denoiser, generator, xhat, zhat, y = _setup(boundary="reflect")
    ev = _LossEvaluator(denoiser, generator, config)

    def loss():
        x_den, kernel = ev.forward(xhat, zhat)
        return ev.loss_value(x_den, kernel, y)[0]

    denoiser.zero_grads()
    generator.zero_grads()
    ev.loss_and_grads(xhat, zhat, y)
    rng = np.random.default_rng(38)
    param, grad = dict(generator.params())["linear1.w"]
    for _ in range(3):
        idx = tuple(rng.integers(0, s) for s in param.shape)
        num = central_difference(loss, param, idx, step=1e-5)
        assert abs(grad[idx] - num) <= 5e-4 * max(1.0, abs(num))


def test_loss_independent_of_kernel_gives_zero_generator_grads():
    # Upstream gradient that treats every kernel tap equally cancels in the
    # softmax backward, so generator parameters receive exactly zero.
    config, denoiser, generator, xhat, zhat, y = _setup(kernel_reg="l1")
    generator.zero_grads()
    generator.forward(zhat)
    generator.backward(np.ones((5, 5)))
    for name, (_, grad) in generator.params().items():
        np.testing.assert_allclose(grad, 0.0, atol=1e-14)


def test_non_finite_loss_reported_without_grads():
    config, denoiser, generator, xhat, zhat, y = _setup()
    ev = _LossEvaluator(denoiser, generator, config)
    bad = y.copy()
    bad[0, 0, 0] = np.nan
    loss = ev.loss_and_grads(xhat, zhat, bad)
    assert not np.isfinite(loss)
