"""Kernel backend parity: numba and numpy must agree to rounding noise,
and each must be deterministic on its own."""

import os
import subprocess
import sys

import numpy as np
import pytest

from deblursdi import backend
from deblursdi import _kernels_numpy as knp

numba_missing = "numba" not in backend.available_backends()
pytestmark = pytest.mark.skipif(numba_missing, reason="numba backend unavailable")

from deblursdi import _kernels_numba as knb  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(60)


def _conv_inputs(rng, h=12, w=10, cin=3, cout=4, k=3, stride=1):
    ph = k // 2
    xp = rng.standard_normal((h + 2 * ph, w + 2 * ph, cin))
    wgt = rng.standard_normal((k, k, cin, cout))
    b = rng.standard_normal(cout)
    out_h = -(-h // stride)
    out_w = -(-w // stride)
    return xp, wgt, b, stride, out_h, out_w


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_forward_agreement(rng, stride):
    args = _conv_inputs(rng, stride=stride)
    a = knp.conv2d_forward(*args)
    b = knb.conv2d_forward(*args)
    np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_backward_agreement(rng, stride):
    xp, wgt, b, stride, out_h, out_w = _conv_inputs(rng, stride=stride)
    dy = rng.standard_normal((out_h, out_w, wgt.shape[3]))
    h = xp.shape[0] - 2 * (wgt.shape[0] // 2)
    w = xp.shape[1] - 2 * (wgt.shape[1] // 2)
    dxa = knp.conv2d_backward_dx(dy, wgt, stride, h, w)
    dxb = knb.conv2d_backward_dx(dy, wgt, stride, h, w)
    np.testing.assert_allclose(dxa, dxb, atol=1e-12)
    dwa, dba = knp.conv2d_backward_dw(xp, dy, stride, wgt.shape[0], wgt.shape[1])
    dwb, dbb = knb.conv2d_backward_dw(xp, dy, stride, wgt.shape[0], wgt.shape[1])
    np.testing.assert_allclose(dwa, dwb, atol=1e-11)
    np.testing.assert_allclose(dba, dbb, atol=1e-12)


def test_psf_kernels_agreement(rng):
    xp = rng.standard_normal((14, 13, 2))
    w = rng.standard_normal((5, 5))
    np.testing.assert_allclose(
        knp.psf_correlate(xp, w), knb.psf_correlate(xp, w), atol=1e-12
    )
    g = rng.standard_normal((10, 9, 2))
    np.testing.assert_allclose(
        knp.psf_grad_kernel(xp, g), knb.psf_grad_kernel(xp, g), atol=1e-11
    )


def test_bilinear_agreement(rng):
    from deblursdi.layers import BilinearResize

    x = rng.standard_normal((9, 7, 3))
    i0, i1, wi = BilinearResize._axis_plan(9, 5)
    j0, j1, wj = BilinearResize._axis_plan(7, 11)
    fa = knp.bilinear_forward(x, i0, i1, wi, j0, j1, wj)
    fb = knb.bilinear_forward(np.ascontiguousarray(x), i0, i1, wi, j0, j1, wj)
    np.testing.assert_allclose(fa, fb, atol=1e-13)
    dy = rng.standard_normal(fa.shape)
    ba = knp.bilinear_backward(dy, i0, i1, wi, j0, j1, wj, 9, 7)
    bb = knb.bilinear_backward(np.ascontiguousarray(dy), i0, i1, wi, j0, j1, wj, 9, 7)
    np.testing.assert_allclose(ba, bb, atol=1e-13)


def test_adam_update_bitwise_agreement():
    def draw():
        r = np.random.default_rng(61)
        return (
            r.standard_normal(257),
            r.standard_normal(257),
            np.abs(r.standard_normal(257)),
            np.abs(r.standard_normal(257)),
        )

    p1, g1, m1, v1 = draw()
    p2, g2, m2, v2 = draw()
    knp.adam_update(p1, g1, m1, v1, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8)
    knb.adam_update(p2, g2, m2, v2, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8)
    np.testing.assert_array_equal(p1, p2)  # elementwise op, no reduction: exact
    np.testing.assert_array_equal(m1, m2)
    np.testing.assert_array_equal(v1, v2)


def test_grads_finite_agreement():
    good = np.ones(64)
    assert knp.grads_finite(good) and knb.grads_finite(good)
    for bad_val in (np.nan, np.inf, -np.inf):
        bad = np.ones(64)
        bad[37] = bad_val
        assert not knp.grads_finite(bad)
        assert not knb.grads_finite(bad)


def test_each_backend_is_self_deterministic(rng):
    xp = rng.standard_normal((16, 16, 2))
    w = rng.standard_normal((7, 7))
    for mod in (knp, knb):
        a = mod.psf_correlate(xp, w)
        b = mod.psf_correlate(xp.copy(), w.copy())
        np.testing.assert_array_equal(a, b)


def test_set_backend_switches_and_rejects_unknown():
    original = backend.get_backend()
    try:
        backend.set_backend("numpy")
        assert backend.get_backend() == "numpy"
        assert backend.kernels() is knp
        backend.set_backend("numba")
        assert backend.kernels() is knb
        with pytest.raises(ValueError):
            backend.set_backend("cuda")
    finally:
        backend.set_backend(original)


def test_env_variable_selects_backend():
    code = "import deblursdi; print(deblursdi.get_backend())"
    for name in ("numpy", "numba"):
        env = dict(os.environ, DEBLURSDI_BACKEND=name)
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        assert out.returncode == 0, out.stderr
        assert out.stdout.strip() == name


def test_env_variable_rejects_unknown_backend():
    env = dict(os.environ, DEBLURSDI_BACKEND="metal")
    out = subprocess.run(
        [sys.executable, "-c", "import deblursdi"],
        env=env,
        capture_output=True,
        text=True,
    )
    assert out.returncode != 0
    assert "unknown backend" in out.stderr


def test_tiny_run_agrees_across_backends():
    from deblursdi import SDIConfig, benchmark_image, run, synthesize_observation
    from deblursdi.synthetic import gaussian_kernel

    img = benchmark_image(16)
    y = synthesize_observation(img, gaussian_kernel(5, 1.0))
    cfg = SDIConfig(
        kernel_size=5, T=2, S=3, base_channels=8, hidden_dim=32, num_hidden=1, seed=0
    )
    original = backend.get_backend()
    try:
        backend.set_backend("numba")
        res_nb = run(y, cfg)
        backend.set_backend("numpy")
        res_np = run(y, cfg)
    finally:
        backend.set_backend(original)
    np.testing.assert_allclose(res_nb.image, res_np.image, atol=1e-9)
    np.testing.assert_allclose(res_nb.kernel, res_np.kernel, atol=1e-9)
    for a, b in zip(res_nb.trace, res_np.trace):
        assert a.loss == pytest.approx(b.loss, rel=1e-9)


def test_benchmark_module_reports_all_ops():
    from deblursdi.benchmark import bench_kernels

    names, results = bench_kernels(size=16, channels=2, repeats=1)
    assert set(names) == {
        "conv2d_forward", "conv2d_backward_dx", "conv2d_backward_dw",
        "psf_correlate", "psf_grad_kernel", "bilinear_forward",
        "bilinear_backward", "grads_finite", "adam_update",
    }
    assert set(results) == set(backend.available_backends())
    for _, (times, outs) in results.items():
        assert set(times) == set(names)
        for op in names:
            assert times[op] >= 0.0
            assert outs[op] is not None


def test_thread_count_does_not_change_results():
    import numba

    if numba.get_num_threads() < 2:
        pytest.skip("single numba thread available; nothing to vary")
    xp = np.random.default_rng(62).standard_normal((32, 32, 2))
    w = np.random.default_rng(63).standard_normal((9, 9))
    many = knb.psf_correlate(xp, w)
    old = numba.get_num_threads()
    try:
        numba.set_num_threads(1)
        one = knb.psf_correlate(xp, w)
    finally:
        numba.set_num_threads(old)
    np.testing.assert_array_equal(many, one)
