import os
import subprocess
import sys

import numpy as np
import pytest

from kernelfin import _backend

BACKENDS = _backend.available_backends()
needs_both = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_backend_name_is_consistent():
    assert _backend.BACKEND in BACKENDS
    assert _backend.lap_dense is BACKENDS[_backend.BACKEND].lap_dense


def test_pure_python_override():
    env = dict(os.environ, KERNELFIN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from kernelfin import _backend; print(_backend.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


@needs_both
def test_lap_backends_agree(rng):
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    for n in (1, 2, 5, 30, 80):
        C = np.ascontiguousarray(rng.random((n, n)))
        a, b = np.asarray(py.lap_dense(C)[0]), np.asarray(cy.lap_dense(C)[0])
        assert C[np.arange(n), a].sum() == pytest.approx(C[np.arange(n), b].sum(), abs=1e-12)


@needs_both
@pytest.mark.parametrize("p,q", [(1, 1), (2, 1), (1, 0), (2, 3)])
def test_garch_backends_agree(rng, p, q):
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    alpha = np.full(p, 0.05)
    beta = np.full(q, 0.8 / max(q, 1))
    lag_e, lag_s = rng.uniform(0.5, 1.5, p), rng.uniform(0.5, 1.5, q)
    x = np.ascontiguousarray(rng.standard_normal(500))
    np.testing.assert_allclose(cy.garch_filter(x, 0.1, alpha, beta, lag_e, lag_s),
                               py.garch_filter(x, 0.1, alpha, beta, lag_e, lag_s), rtol=1e-14)
    xa, sa = cy.garch_unfilter(x, 0.2, 0.1, alpha, beta, lag_e, lag_s)
    xb, sb = py.garch_unfilter(x, 0.2, 0.1, alpha, beta, lag_e, lag_s)
    np.testing.assert_allclose(xa, xb, rtol=1e-14)
    np.testing.assert_allclose(sa, sb, rtol=1e-14)
