"""Agreement between the compiled kernel core and the numpy fallback."""

import subprocess
import sys

import numpy as np
import pytest

from ias import _kernels
from ias.primitive import RawPrimitiveParams, assemble, symmetric_from_tril

python_backend = _kernels.get_backend("python")
try:
    compiled_backend = _kernels.get_backend("compiled")
except ImportError:
    compiled_backend = None

needs_both = pytest.mark.skipif(compiled_backend is None,
                                reason="compiled kernel extension not built")


def make_stacks(rng, m=4):
    A = np.empty((m, 10, 10))
    B = np.empty((m, 10, 10))
    centers = np.empty((m, 3))
    for i in range(m):
        raw = RawPrimitiveParams(b=rng.normal(0.0, 0.5, 55),
                                 r_raw=float(rng.normal()),
                                 c_raw=rng.normal(0.0, 0.5, 3))
        prim = assemble(raw)
        A[i] = prim.A
        B[i] = symmetric_from_tril(raw.b)
        centers[i] = prim.center
    return A, B, centers


def test_backend_name_is_sane():
    assert _kernels.BACKEND in ("compiled", "python")
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


def test_env_override_selects_python_backend():
    code = "from ias._kernels import BACKEND; print(BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env={"IAS_KERNEL_BACKEND": "python",
                                          "PATH": "/usr/bin:/bin"})
    assert out.returncode == 0
    assert out.stdout.strip() == "python"


@needs_both
def test_union_eval_agreement():
    rng = np.random.default_rng(91)
    A, _, centers = make_stacks(rng)
    pts = rng.uniform(-1.1, 1.1, (500, 3))
    va, ia = compiled_backend.union_eval(A, centers, pts)
    vb, ib = python_backend.union_eval(A, centers, pts)
    assert np.allclose(va, vb, rtol=1e-12, atol=1e-12)
    assert np.array_equal(ia, ib)


@needs_both
def test_union_eval_grad_agreement():
    rng = np.random.default_rng(92)
    A, _, centers = make_stacks(rng)
    pts = rng.uniform(-1.1, 1.1, (300, 3))
    va, ia, ga = compiled_backend.union_eval_grad(A, centers, pts)
    vb, ib, gb = python_backend.union_eval_grad(A, centers, pts)
    assert np.allclose(va, vb, rtol=1e-12, atol=1e-12)
    assert np.array_equal(ia, ib)
    assert np.allclose(ga, gb, rtol=1e-11, atol=1e-12)


@needs_both
def test_loss_grad_agreement():
    rng = np.random.default_rng(93)
    A, B, centers = make_stacks(rng, m=3)
    n = 600
    pts = rng.uniform(-1.05, 1.05, (n, 3))
    kinds = rng.integers(0, 3, n).astype(np.uint8)
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    lams = np.array([2.0, 1.0, 10.0, 1.0])
    sa, na, ua, da, ga = compiled_backend.loss_grad(A, B, centers, pts, kinds,
                                                    normals, lams, True)
    sb, nb, ub, db, gb = python_backend.loss_grad(A, B, centers, pts, kinds,
                                                  normals, lams, True)
    assert sa == pytest.approx(sb, rel=1e-11)
    assert na == pytest.approx(nb, rel=1e-11)
    assert (ua, da) == (ub, db)
    scale = np.abs(gb).max()
    assert np.allclose(ga, gb, rtol=1e-9, atol=1e-11 * max(scale, 1.0))


@needs_both
def test_solve_quartics_agreement():
    rng = np.random.default_rng(94)
    C = rng.normal(0.0, 2.0, (800, 5))
    C[:, 0] = np.abs(C[:, 0]) + 0.05
    ra, ca = compiled_backend.solve_quartics(C)
    rb, cb = python_backend.solve_quartics(C)
    assert np.array_equal(ca, cb)
    for i in range(len(C)):
        k = ca[i]
        assert np.allclose(ra[i, :k], rb[i, :k], rtol=1e-9, atol=1e-9)
        assert np.isnan(ra[i, k:]).all()
        assert np.isnan(rb[i, k:]).all()


@needs_both
def test_restrict_rays_agreement():
    rng = np.random.default_rng(95)
    raw = RawPrimitiveParams(b=rng.normal(0.0, 0.5, 55), r_raw=0.2,
                             c_raw=rng.normal(0.0, 0.4, 3))
    prim = assemble(raw)
    n = 200
    origins = rng.uniform(-2.0, 2.0, (n, 3))
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = compiled_backend.restrict_rays(prim.coeffs, prim.center, origins, dirs)
    pb = python_backend.restrict_rays(prim.coeffs, prim.center, origins, dirs)
    assert pa.shape == pb.shape == (n, 5)
    assert np.allclose(pa, pb, rtol=1e-10, atol=1e-12)


@needs_both
def test_compiled_accepts_read_only_arrays():
    # assembled primitives freeze their arrays; the kernels must cope
    rng = np.random.default_rng(96)
    raw = RawPrimitiveParams(b=rng.normal(0.0, 0.5, 55), r_raw=0.0,
                             c_raw=np.zeros(3))
    prim = assemble(raw)
    assert not prim.coeffs.flags.writeable
    origins = np.zeros((2, 3))
    dirs = np.tile([0.0, 0.0, 1.0], (2, 1))
    out = compiled_backend.restrict_rays(prim.coeffs, prim.center, origins, dirs)
    assert out.shape == (2, 5)
