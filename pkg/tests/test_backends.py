import importlib
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from instances import cgdare_instance, strict_instance

from econlq import _backend
from econlq._kernels_py import STATUS_DIVERGED, STATUS_OK, STATUS_SINGULAR

seeds = st.integers(0, 2**32 - 1)
BACKENDS = _backend.available_backends()
needs_compiled = pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled kernels not built")


def _both():
    return BACKENDS["python"], BACKENDS["compiled"]


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert _backend.BACKEND in BACKENDS


def test_fallback_is_selected_without_extension(monkeypatch):
    import econlq

    monkeypatch.setitem(sys.modules, "econlq._kernels", None)
    monkeypatch.delattr(econlq, "_kernels", raising=False)
    try:
        mod = importlib.reload(_backend)
        assert mod.BACKEND == "python" and mod.kernels is BACKENDS["python"]
    finally:
        monkeypatch.undo()
        importlib.reload(_backend)


@needs_compiled
@given(seeds, st.integers(1, 5), st.integers(1, 4))
def test_regularized_iteration_agrees(seed, n, m):
    inst = strict_instance(np.random.default_rng(seed), n, m)
    s, c = inst.system, inst.cost
    args = (s.A, s.B, c.Q, c.S, c.R + inst.G, np.zeros((n, n)), 1e-13, 3000, 1e8, 1e-14)
    py, cy = (k.regularized_iteration(*args) for k in _both())
    assert py[2] == cy[2]
    assert abs(py[1] - cy[1]) <= 2
    assert np.linalg.norm(py[0] - cy[0]) <= 1e-9 * (1 + np.linalg.norm(py[0]))


@needs_compiled
@given(seeds, st.integers(1, 4), st.integers(1, 4), st.integers(0, 12))
def test_generalized_recursion_agrees(seed, n, m, steps):
    inst = cgdare_instance(np.random.default_rng(seed), n, m, psd=False)
    s, c = inst.system, inst.cost
    P0 = inst.P + 0.01 * np.eye(n)
    args = (s.A, s.B, c.Q, c.S, c.R, P0, steps, 1e-10, 0.0, 1e8, True)
    py, cy = (k.generalized_recursion(*args) for k in _both())
    scale = 1 + np.linalg.norm(py[0])
    assert py[2] == cy[2] and py[3] == cy[3]
    assert np.linalg.norm(py[0] - cy[0]) <= 1e-8 * scale
    assert np.linalg.norm(py[5] - cy[5]) <= 1e-8 * scale * (steps + 1)
    assert py[6].shape == cy[6].shape == (steps, m, n)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_singular_weight_status(name):
    k = BACKENDS[name]
    A, B = np.eye(2), np.eye(2)
    P, it, status = k.regularized_iteration(A, B, np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)),
                                            np.zeros((2, 2)), 1e-12, 10, 1e8, 1e-14)
    assert status == STATUS_SINGULAR and it == 0


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_divergence_status(name):
    k = BACKENDS[name]
    # no input at all: P <- 1 + 4P blows up
    A, B = np.array([[2.0]]), np.zeros((1, 1))
    out = k.generalized_recursion(A, B, np.eye(1), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)),
                                  100, 1e-10, 1e-12, 1e6, False)
    assert out[3] == STATUS_DIVERGED and out[5] is None


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_scalar_golden_ratio(name):
    k = BACKENDS[name]
    one = np.eye(1)
    P, it, status = k.regularized_iteration(2 * one, one, one, 0 * one, one, 0 * one, 1e-14, 1000, 1e8, 1e-14)
    assert status == STATUS_OK and abs(P[0, 0] - (2 + np.sqrt(5))) <= 1e-10


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_subnormal_input_weight_is_singular(name):
    k = BACKENDS[name]
    tiny = np.array([[2.2e-311]])
    P, K, *_ = k.generalized_recursion(np.eye(1), np.eye(1), np.eye(1), np.zeros((1, 1)), tiny, np.zeros((1, 1)),
                                       1, 1e-10, 0.0, 1e8, False)
    assert np.array_equal(K, [[0.0]]) and P[0, 0] == 1.0
