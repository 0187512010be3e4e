import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binnet import kernels
from binnet.errors import DimMismatch, LengthMismatch
from binnet.kernels import (BenchResult, ConvGeometry, GemmDims, bench_gemm, binary_conv2d, binary_dot, binary_gemm,
                            float_conv2d_ref, gemm_dims)
from binnet.tensor import pack_rows, sign_quantize
from oracles import conv_loops


def pm1(rng, shape):
    return rng.choice([-1.0, 1.0], size=shape)


def test_binary_dot_examples(rng):
    a = pm1(rng, (1, 100))
    pa = pack_rows(a).words[0]
    pc = pack_rows(-a).words[0]
    assert binary_dot(pa, pa, 100) == 100
    assert binary_dot(pa, pc, 100) == -100
    x = pack_rows(np.array([[1, -1, 1]])).words[0]
    y = pack_rows(np.array([[1, 1, -1]])).words[0]
    assert binary_dot(x, y, 3) == -1


def test_binary_dot_length_mismatch():
    with pytest.raises(LengthMismatch):
        binary_dot(np.zeros(1, "<u8"), np.zeros(2, "<u8"), 64)


def test_gemm_trivial():
    one = pack_rows(np.ones((1, 1)))
    np.testing.assert_array_equal(binary_gemm(one, one), [[1]])
    a, b = pack_rows(np.ones((4, 70))), pack_rows(np.ones((5, 70)))
    assert (binary_gemm(a, b) == 70).all()


def test_gemm_matches_float_oracle(rng):
    a, b = pm1(rng, (17, 31)), pm1(rng, (31, 23))
    out = binary_gemm(pack_rows(a), pack_rows(np.ascontiguousarray(b.T)))
    assert out.dtype == np.int32
    np.testing.assert_array_equal(out, (a @ b).astype(np.int32))


def test_gemm_dim_mismatch():
    with pytest.raises(DimMismatch):
        binary_gemm(pack_rows(np.ones((2, 3))), pack_rows(np.ones((2, 4))))


def test_gemm_dims_and_op_count():
    d = gemm_dims(pack_rows(np.ones((3, 10))), pack_rows(np.ones((4, 10))))
    assert (d.n, d.m, d.k) == (3, 4, 10)
    assert d.binary_ops == 2 * 3 * 4 * 10 and d.macs == 120
    with pytest.raises(DimMismatch):
        GemmDims(0, 1, 1)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_gemm_parity_and_bounds(n, m, k, seed):
    rng = np.random.default_rng(seed)
    a, b = pm1(rng, (n, k)), pm1(rng, (m, k))
    out = binary_gemm(pack_rows(a), pack_rows(b))
    assert (np.abs(out) <= k).all()
    assert ((out - k) % 2 == 0).all()
    np.testing.assert_array_equal(out, a @ b.T)


def test_gemm_independent_of_thread_count(rng):
    a, b = pack_rows(pm1(rng, (40, 300))), pack_rows(pm1(rng, (50, 300)))
    before = kernels.set_threads()
    try:
        ref = binary_gemm(a, b)
        kernels.set_threads(1)
        np.testing.assert_array_equal(binary_gemm(a, b), ref)
    finally:
        kernels.set_threads(before)


def test_conv_single_pixel():
    one = sign_quantize(np.ones((1, 1, 1, 1)))
    assert binary_conv2d(one, one)[0, 0, 0, 0] == 1


def test_conv_all_ones_valid():
    ic = 5
    out = binary_conv2d(sign_quantize(np.ones((1, ic, 6, 6))), sign_quantize(np.ones((3, ic, 3, 3))))
    assert out.shape == (1, 3, 4, 4) and (out == 9 * ic).all()


def test_conv_matches_loop_oracle(rng):
    for _ in range(40):
        ic, oc = rng.integers(1, 5, 2)
        k, s, p, d = rng.integers(1, 4), rng.integers(1, 3), rng.integers(0, 2), rng.integers(1, 3)
        h = d * (k - 1) + 1 + rng.integers(0, 4)
        x, w = pm1(rng, (2, ic, h, h)), pm1(rng, (oc, ic, k, k))
        out = binary_conv2d(sign_quantize(x), sign_quantize(w), ConvGeometry(s, p, d))
        np.testing.assert_array_equal(out, conv_loops(x, w, s, p, d, pad_value=-1))


def test_float_ref_examples(rng):
    x = rng.standard_normal((2, 3, 5, 5))
    w = np.zeros((3, 3, 1, 1))
    w[[0, 1, 2], [0, 1, 2]] = 2.0
    np.testing.assert_allclose(float_conv2d_ref(x, w), 2 * x)
    delta = np.zeros((1, 1, 3, 3))
    delta[0, 0, 1, 1] = 1
    np.testing.assert_allclose(float_conv2d_ref(x[:, :1], delta)[:, 0], x[:, 0, 1:-1, 1:-1])


def test_float_ref_matches_lowering(rng):
    from binnet.nn.functional import conv2d_forward
    for _ in range(20):
        x, w = rng.standard_normal((2, 3, 9, 8)), rng.standard_normal((4, 3, 3, 3))
        g = ConvGeometry(*rng.integers(1, 3, 1), rng.integers(0, 2), rng.integers(1, 3))
        y, _ = conv2d_forward(x, w, None, g, pad_value=-1.0)
        np.testing.assert_allclose(float_conv2d_ref(x, w, g, -1.0), y, atol=1e-12)


def test_conv_dim_mismatch():
    with pytest.raises(DimMismatch):
        binary_conv2d(sign_quantize(np.ones((1, 2, 3, 3))), sign_quantize(np.ones((1, 3, 1, 1))))


def test_bench_report_shape():
    res = bench_gemm(GemmDims(32, 16, 64), repetitions=2)
    assert len(res) == 2
    r = res[0]
    assert r.theoretical == 64 and r.binary_ns > 0 and r.float_ns > 0
    fields = r.csv_row().split(",")
    assert len(fields) == len(BenchResult.HEADER.split(",")) and fields[-1] == "64"
