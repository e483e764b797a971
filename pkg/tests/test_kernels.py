"""Backend dispatch and python/compiled agreement on the dense kernels."""

import numpy as np
import pytest

from uqnav import kernels
from uqnav.rng import stream

BOTH = kernels.AVAILABLE
CODES = {"relu": 0, "tanh": 1, "identity": 2}


@pytest.fixture(autouse=True)
def _restore_backend():
    before = kernels.active()
    yield
    kernels.use(before)


def _random_case(rng, n, k, m):
    x = rng.standard_normal((n, k))
    w = rng.standard_normal((m, k))
    b = rng.standard_normal(m)
    ds = rng.standard_normal((n, m))
    return x, w, b, ds


def test_affine_matches_numpy_oracle():
    rng = stream(0, "kern", "affine")
    for trial in range(20):
        n, k, m = rng.integers(1, 9, size=3)
        x, w, b, _ = _random_case(rng, n, k, m)
        for name in BOTH:
            kernels.use(name)
            assert np.allclose(kernels.affine(x, w, b), x @ w.T + b, rtol=1e-12)


def test_activations_match_oracle():
    rng = stream(0, "kern", "act")
    s = rng.standard_normal((6, 5))
    oracle = {
        "relu": np.maximum(s, 0.0),
        "tanh": np.tanh(s),
        "identity": s,
    }
    for name in BOTH:
        kernels.use(name)
        for act, code in CODES.items():
            assert np.allclose(kernels.activate(s, code), oracle[act], rtol=1e-15)


def test_activation_grad_matches_oracle():
    rng = stream(0, "kern", "actgrad")
    s = rng.standard_normal((6, 5))
    da = rng.standard_normal((6, 5))
    for name in BOTH:
        kernels.use(name)
        for act, code in CODES.items():
            a = kernels.activate(s, code)
            got = kernels.activation_grad(a, da, code)
            if act == "relu":
                want = da * (s > 0)
            elif act == "tanh":
                want = da * (1.0 - np.tanh(s) ** 2)
            else:
                want = da
            assert np.allclose(got, want, rtol=1e-12)


def test_grad_kernels_match_einsum_oracle():
    rng = stream(0, "kern", "grads")
    for trial in range(20):
        n, k, m = rng.integers(1, 9, size=3)
        x, w, _, ds = _random_case(rng, n, k, m)
        for name in BOTH:
            kernels.use(name)
            dw, db = kernels.affine_grad_params(ds, x)
            assert np.allclose(dw, ds.T @ x, rtol=1e-12)
            assert np.allclose(db, ds.sum(axis=0), rtol=1e-12)
            assert np.allclose(kernels.affine_grad_input(ds, w), ds @ w, rtol=1e-12)


def test_backends_agree_pairwise():
    if len(BOTH) < 2:
        pytest.skip("compiled backend not built")
    rng = stream(0, "kern", "parity")
    for trial in range(30):
        n, k, m = rng.integers(1, 17, size=3)
        x, w, b, ds = _random_case(rng, n, k, m)
        results = {}
        for name in BOTH:
            kernels.use(name)
            act = kernels.activate(kernels.affine(x, w, b), 1)
            dw, db = kernels.affine_grad_params(ds, x)
            results[name] = (act, dw, db, kernels.affine_grad_input(ds, w))
        a, b_ = results[BOTH[0]], results[BOTH[1]]
        for lhs, rhs in zip(a, b_):
            assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_kernels_accept_read_only_arrays():
    rng = stream(0, "kern", "ro")
    x, w, b, ds = _random_case(rng, 4, 3, 2)
    for a in (x, w, b, ds):
        a.setflags(write=False)
    for name in BOTH:
        kernels.use(name)
        kernels.affine(x, w, b)
        kernels.affine_grad_params(ds, x)
        kernels.affine_grad_input(ds, w)


def test_unknown_activation_code_rejected():
    for name in BOTH:
        kernels.use(name)
        with pytest.raises(ValueError):
            kernels.activate(np.zeros((1, 1)), 9)


def test_use_rejects_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use("fortran")


def test_active_reports_current_backend():
    for name in BOTH:
        kernels.use(name)
        assert kernels.active() == name
