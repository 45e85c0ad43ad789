import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import nnls as scipy_nnls

from nnrank import kernels
from nnrank.nnls import nnls, nnls_certificate, nnls_gram


def test_projection():
    x = nnls(np.eye(2), [3.0, -1.0])
    assert np.array_equal(x, [3.0, 0.0])


def test_exact_fit():
    x = nnls(np.ones((2, 1)), [1.0, 1.0])
    np.testing.assert_allclose(x, [1.0], atol=1e-15)


def test_recovers_planted(rng):
    for _ in range(50):
        M = rng.random((6, 3))
        xs = rng.random(3)
        x = nnls(M, M @ xs)
        np.testing.assert_allclose(x, xs, atol=1e-8)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        nnls(np.eye(3), [1.0, 2.0])


def test_zero_rhs():
    assert not nnls(np.eye(3), np.zeros(3)).any()


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 12))
def test_matches_scipy_oracle(seed, r, m):
    g = np.random.default_rng(seed)
    M = g.standard_normal((m, r))
    b = g.standard_normal(m)
    x = nnls(M, b)
    ref, _ = scipy_nnls(M, b)
    assert np.all(x >= 0)
    f_x = np.linalg.norm(M @ x - b)
    f_ref = np.linalg.norm(M @ ref - b)
    assert f_x <= f_ref + 1e-9 * (1 + f_ref)


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_certificate(seed, r):
    g = np.random.default_rng(seed)
    M = g.standard_normal((r + 4, r))
    b = g.standard_normal(r + 4)
    x = nnls(M, b)
    lo, hi = nnls_certificate(M, b, x)
    scale = np.abs(M.T @ b).max() + 1
    assert lo >= -1e-10 * scale
    assert hi <= 1e-10 * scale


def test_gram_singular():
    # duplicated column: singular Gram, still a valid minimizer
    M = np.array([[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
    b = np.array([2.0, 1.0, 2.0])
    x = nnls_gram(M.T @ M, M.T @ b)
    assert np.all(x >= 0)
    assert x.sum() == pytest.approx(2.0)


def _start(rng, dims, r, nonneg):
    rows = sum(dims)
    return rng.random((rows, r)) if nonneg else rng.standard_normal((rows, r))


@pytest.mark.skipif(kernels.compiled_cp_run is None,
                    reason="compiled kernels not built")
@pytest.mark.parametrize("nonneg", [True, False])
@pytest.mark.parametrize("dims,r", [((3, 3, 3), 2), ((2, 3, 4), 3),
                                    ((2, 2, 2, 2), 2), ((4, 5), 2)])
def test_compiled_matches_fallback(rng, nonneg, dims, r):
    X = rng.random(int(np.prod(dims)))
    F0 = _start(rng, dims, r, nonneg)
    Fa, Fb = F0.copy(), F0.copy()
    ha = kernels.compiled_cp_run(X, Fa, dims, nonneg, 200, 1e-12, 0.0, 1e-12)
    hb = kernels.fallback_cp_run(X, Fb, dims, nonneg, 200, 1e-12, 0.0, 1e-12)
    n = min(len(ha), len(hb))
    np.testing.assert_allclose(ha[:n], hb[:n], rtol=1e-8, atol=1e-10)
    if len(ha) == len(hb):
        np.testing.assert_allclose(Fa, Fb, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("run", [kernels.fallback_cp_run,
                                 kernels.compiled_cp_run])
def test_kernel_history_monotone(rng, run):
    if run is None:
        pytest.skip("compiled kernels not built")
    dims = (3, 4, 3)
    X = rng.random(36)
    for nonneg in (True, False):
        F = _start(rng, dims, 3, nonneg)
        h = run(X, F, dims, nonneg, 300, 1e-14, 0.0, 1e-12)
        assert np.all(np.diff(h) <= 1e-12 * h[0])
        if nonneg:
            assert F.min() >= 0


def test_kernel_stops_at_target(rng):
    dims = (2, 2, 2)
    a, b, c = rng.random((3, 2))
    X = np.einsum("i,j,k->ijk", a, b, c).reshape(-1)
    F = _start(rng, dims, 1, True)
    h = kernels.cp_run(X, F, dims, True, 5000, 1e-15, 1e-9, 1e-12)
    assert h[-1] <= 1e-9
    assert len(h) < 5000


def test_backend_flag():
    assert kernels.BACKEND in ("compiled", "python")


def test_pure_env_selects_fallback():
    import os
    import subprocess
    import sys
    env = dict(os.environ, NNRANK_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c",
         "from nnrank import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
