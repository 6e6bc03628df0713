import numpy as np
import pytest

from sglab.grid import GridSpec
from sglab.kernels import K_SPACE_SUPPORT, K_TIME_SUPPORT, KernelTable, causal_convolve, kernel_lags


def test_table_causal_and_compact():
    g = GridSpec(32, 2.0 ** -9)
    t = KernelTable.build(g, 1.0, "K")
    assert np.all(t.real[0] == 0)
    assert t.lags == kernel_lags(g.dt)
    assert t.lags * g.dt == pytest.approx(K_TIME_SUPPORT, abs=2 * g.dt)
    X1, X2 = g.torus_offsets()
    far = np.sqrt(X1 ** 2 + X2 ** 2) > K_SPACE_SUPPORT + g.dx
    assert np.all(np.abs(t.real[1:, far]) < 1e-12 * np.abs(t.real).max())


def test_K_plus_remainder_is_G():
    g = GridSpec(16, 2.0 ** -8)
    K = KernelTable.build(g, 1.0, "K")
    R = KernelTable.build(g, 1.0, "G-K")
    G = KernelTable.build(g, 1.0, "G")
    assert np.allclose(K.real + R.real, G.real, atol=1e-10 * np.abs(G.real).max())


def test_derivative_is_real_and_odd():
    g = GridSpec(16, 2.0 ** -8)
    K = KernelTable.build(g, 1.0, "K")
    D = K.derivative(1)
    back = np.fft.fft2(D.real, axes=(1, 2)) * g.dx ** 2
    assert np.allclose(back, D.hat, atol=1e-12 * np.abs(D.hat).max())
    assert np.allclose(D.real[:, 1, 0], -D.real[:, -1, 0])


def test_causal_convolve_matches_direct_sum(rng):
    g = GridSpec(8, 2.0 ** -6)
    K = KernelTable.build(g, 1.0, "K")
    f = rng.standard_normal((12, 8, 8))
    out = causal_convolve(K, f, history="zero")
    i, x = 9, (2, 5)
    direct = 0.0
    for j in range(1, K.lags + 1):
        if i - j < 0:
            continue
        for a in range(8):
            for b in range(8):
                direct += K.real[j, (x[0] - a) % 8, (x[1] - b) % 8] * f[i - j, a, b]
    direct *= g.dt * g.dx ** 2
    assert out[i][x] == pytest.approx(direct, rel=1e-10, abs=1e-12)
