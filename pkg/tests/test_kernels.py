import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from porous_harnack import kernels

npk = kernels.implementation("numpy")
nbk = kernels.implementation("numba")
BACKENDS = [npk, nbk]


@pytest.mark.parametrize("impl", BACKENDS, ids=["numpy", "numba"])
@pytest.mark.parametrize("key,ctr", [(12345, (7, 0, 0, 0)), (0, (0, 0, 0, 0)), (2**64 - 1, (3, 9, 1, 5))])
def test_philox_matches_numpy_bit_generator(impl, key, ctr):
    # numpy's Philox advances the counter before its first block
    ref = np.random.Philox(key=key, counter=list(ctr)).random_raw(4)
    c = np.array([[ctr[0] + 1, ctr[1], ctr[2], ctr[3]]], dtype=np.uint64)
    out = impl.philox4x64(c, np.array([[key, 0]], dtype=np.uint64))
    np.testing.assert_array_equal(out[0], ref)


def test_philox_backends_bit_identical():
    rng = np.random.default_rng(0)
    ctr = rng.integers(0, 2**63, size=(500, 4), dtype=np.uint64)
    key = rng.integers(0, 2**63, size=(500, 2), dtype=np.uint64)
    np.testing.assert_array_equal(npk.philox4x64(ctr, key), nbk.philox4x64(ctr, key))


def test_gaussian_block_backends_and_independence_of_batching():
    ids = np.arange(100, 164, dtype=np.uint64)
    a = npk.gaussian_block(5, ids, 17, 0, 10)
    b = nbk.gaussian_block(5, ids, 17, 0, 10)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)
    # a path's draws do not depend on which other paths share the batch
    np.testing.assert_array_equal(nbk.gaussian_block(5, ids[7:8], 17, 0, 10)[0], b[7])
    assert a.shape == (64, 10)


def test_gaussian_block_moments():
    g = kernels.gaussian_block(1, np.arange(20_000, dtype=np.uint64), 0, 0, 8)
    assert abs(g.mean()) < 4 / np.sqrt(g.size)
    assert abs(g.var() - 1) < 4 * np.sqrt(2 / g.size)
    c = np.corrcoef(g.T)
    assert np.max(np.abs(c - np.eye(8))) < 0.03


def test_streams_and_steps_differ():
    ids = np.arange(4, dtype=np.uint64)
    a = kernels.gaussian_block(1, ids, 0, 0, 4)
    assert not np.allclose(a, kernels.gaussian_block(1, ids, 1, 0, 4))
    assert not np.allclose(a, kernels.gaussian_block(1, ids, 0, 1, 4))
    assert not np.allclose(a, kernels.gaussian_block(2, ids, 0, 0, 4))


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 4.0), st.floats(0.0, 3.0), st.integers(0, 2**31))
def test_power_law_backends_agree(r, scale, seed):
    g = np.random.default_rng(seed).standard_normal((3, 17)) * 5
    np.testing.assert_allclose(npk.power_law(g, r, scale), nbk.power_law(g, r, scale), rtol=1e-13, atol=1e-300)
    np.testing.assert_allclose(npk.power_law(g, r, 1.0), np.abs(g) ** (r - 1) * g, rtol=1e-13)


@pytest.mark.parametrize("taming", [True, False])
def test_tamed_update_backends_agree(taming):
    rng = np.random.default_rng(3)
    s, d, dw = rng.standard_normal((3, 5, 6))
    inv_lam = 1 / np.arange(1.0, 7.0)
    q = np.linspace(0.5, 1.5, 6)
    o1, n1 = npk.tamed_update(s, d, inv_lam, 1e-2, taming, q, dw)
    o2, n2 = nbk.tamed_update(s, d, inv_lam, 1e-2, taming, q, dw)
    np.testing.assert_allclose(o1, o2, rtol=1e-14)
    np.testing.assert_allclose(n1, n2, rtol=1e-14)
    nb = np.sqrt((d * d) @ inv_lam)
    fac = 1e-2 / (1 + 1e-2 * nb) if taming else np.full(5, 1e-2)
    np.testing.assert_allclose(o1, s + fac[:, None] * d + q * dw, rtol=1e-14)


@pytest.mark.parametrize("p", [2.0, 3.0, 2.5])
def test_lp_power_backends_agree(p):
    g = np.random.default_rng(4).standard_normal((4, 40))
    w = np.full(40, 1 / 40)
    np.testing.assert_allclose(npk.lp_power(g, w, p), nbk.lp_power(g, w, p), rtol=1e-13)
    np.testing.assert_allclose(npk.lp_power(g, w, p), (np.abs(g) ** p) @ w, rtol=1e-13)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, POROUS_HARNACK_PURE_NUMPY="1")
    out = subprocess.run(
        [sys.executable, "-c", "from porous_harnack import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.implementation("cuda")
