"""xnor/popcount arithmetic: binary dot product, GEMM and 2-D convolution.

The GEMM core works on rows packed by :mod:`binnet.tensor`. For ±1 vectors
a and b of length k stored as bits (1 ↦ +1), ``a·b = k - 2·popcount(a ^ b)``.
A float reference convolution and a small benchmark harness live here too.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numba
import numpy as np

if numba.config.THREADING_LAYER == "default":
    # omp is thread-safe for concurrent callers; the old TBB here is rejected noisily
    numba.config.THREADING_LAYER = "omp"

from .errors import BadGeometry, DimMismatch, LengthMismatch
from .tensor import BitTensor, WORD_DTYPE, conv_output_size, im2col, sign_quantize, unpack, words_for

MAX_K = 1 << 20
THEORETICAL_SPEEDUP = 64

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_S1 = np.uint64(1)
_S2 = np.uint64(2)
_S4 = np.uint64(4)
_S56 = np.uint64(56)


def set_threads(n: int | None = None) -> int:
    """Cap kernel parallelism; ``None`` reads ``BINNET_THREADS``."""
    if n is None:
        env = os.environ.get("BINNET_THREADS")
        if not env:
            return numba.get_num_threads()
        n = int(env)
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


@numba.njit(cache=True, inline="always")
def _popcount64(x):
    # LLVM folds this SWAR sequence into a single popcnt where available.
    x = x - ((x >> _S1) & _M1)
    x = (x & _M2) + ((x >> _S2) & _M2)
    x = (x + (x >> _S4)) & _M4
    return (x * _H01) >> _S56


@numba.njit(cache=True, parallel=True)
def _xnor_gemm(a, b, k, out):
    n, nw = a.shape
    m = b.shape[0]
    for i in numba.prange(n):
        for j in range(m):
            acc = np.uint64(0)
            for w in range(nw):
                acc += _popcount64(a[i, w] ^ b[j, w])
            out[i, j] = k - 2 * np.int64(acc)


@numba.njit(cache=True)
def _naive_float_gemm(a, b, out):
    n, k = a.shape
    m = b.shape[1]
    for i in range(n):
        for j in range(m):
            acc = a.dtype.type(0)
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc


@numba.njit(cache=True)
def _conv_nested(x, wt, stride, padding, dilation, pad_value, out):
    n, c, h, w = x.shape
    oc, _, kh, kw = wt.shape
    oh, ow = out.shape[2], out.shape[3]
    for b in range(n):
        for o in range(oc):
            for y in range(oh):
                for z in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(kh):
                            r = y * stride - padding + i * dilation
                            for j in range(kw):
                                s = z * stride - padding + j * dilation
                                if 0 <= r < h and 0 <= s < w:
                                    v = x[b, ci, r, s]
                                else:
                                    v = pad_value
                                acc += v * wt[o, ci, i, j]
                    out[b, o, y, z] = acc


@dataclass(frozen=True)
class GemmDims:
    n: int
    m: int
    k: int

    def __post_init__(self):
        if min(self.n, self.m, self.k) < 1:
            raise DimMismatch(f"GEMM dims must be >= 1, got {self}")

    @property
    def binary_ops(self) -> int:
        return 2 * self.n * self.m * self.k

    @property
    def macs(self) -> int:
        return self.n * self.m * self.k


@dataclass(frozen=True)
class ConvGeometry:
    stride: int = 1
    padding: int = 0
    dilation: int = 1


def binary_dot(a: np.ndarray, b: np.ndarray, k: int) -> int:
    a = np.asarray(a, dtype=WORD_DTYPE).ravel()
    b = np.asarray(b, dtype=WORD_DTYPE).ravel()
    nw = words_for(k)
    if a.shape != b.shape or a.shape[0] != nw:
        raise LengthMismatch(f"rows of {a.shape[0]} and {b.shape[0]} words for k={k}")
    return int(k - 2 * int(np.bitwise_count(a ^ b).sum()))


def gemm_dims(a: BitTensor, b: BitTensor) -> GemmDims:
    if a.bits_per_row != b.bits_per_row or a.words_per_row != b.words_per_row:
        raise DimMismatch(f"reduction lengths differ: {a.bits_per_row} vs {b.bits_per_row}")
    return GemmDims(a.rows, b.rows, a.bits_per_row)


def binary_gemm(a: BitTensor, b: BitTensor) -> np.ndarray:
    """``out[i, j] = row_i(a) · col_j(B)`` for ±1 operands, as int32.

    ``a`` packs the n×k left operand row-wise. ``b`` packs the k×m right
    operand column-wise, i.e. it has m rows of k bits. The number of binary
    operations performed is ``gemm_dims(a, b).binary_ops``.
    """
    dims = gemm_dims(a, b)
    if dims.k > MAX_K:
        raise DimMismatch(f"k={dims.k} exceeds the accumulator cap {MAX_K}")
    out = np.empty((dims.n, dims.m), dtype=np.int32)
    _xnor_gemm(np.ascontiguousarray(a.words), np.ascontiguousarray(b.words), dims.k, out)
    return out


def _conv_shapes(in_shape, w_shape, geometry):
    if len(in_shape) != 4 or len(w_shape) != 4:
        raise DimMismatch("convolution expects NCHW input and (OC, IC, kh, kw) weights")
    n, c, h, w = in_shape
    oc, ic, kh, kw = w_shape
    if c != ic:
        raise DimMismatch(f"input has {c} channels, weights expect {ic}")
    g = geometry
    if g.stride < 1 or g.dilation < 1 or g.padding < 0:
        raise BadGeometry(f"invalid geometry {g}")
    oh = conv_output_size(h, kh, g.stride, g.padding, g.dilation)
    ow = conv_output_size(w, kw, g.stride, g.padding, g.dilation)
    if oh < 1 or ow < 1:
        raise BadGeometry(f"output size {oh}x{ow} for input {h}x{w}, kernel {kh}x{kw}")
    return n, oc, oh, ow, kh, kw


def binary_conv2d(inp: BitTensor, weights: BitTensor, geometry: ConvGeometry = ConvGeometry()) -> np.ndarray:
    """Binary convolution of packed ±1 operands; padding reads as -1.

    The input is lowered with im2col, each patch column is packed along the
    reduction axis and the result goes through :func:`binary_gemm`.
    """
    n, oc, oh, ow, kh, kw = _conv_shapes(inp.logical_shape, weights.logical_shape, geometry)
    x = unpack(inp, dtype=np.int8)
    cols = im2col(x, (kh, kw), geometry.stride, geometry.padding, geometry.dilation, pad_value=-1)
    packed_cols = sign_quantize(np.ascontiguousarray(cols.T))
    if weights.bits_per_row != packed_cols.bits_per_row:
        raise DimMismatch("weight rows do not match patch length")
    out = binary_gemm(weights, packed_cols)
    return np.ascontiguousarray(out.reshape(oc, n, oh, ow).transpose(1, 0, 2, 3))


def float_conv2d_ref(inp: np.ndarray, weights: np.ndarray, geometry: ConvGeometry = ConvGeometry(),
                     pad_value: float = 0.0) -> np.ndarray:
    """Direct nested-loop convolution, accumulated in double precision."""
    n, oc, oh, ow, _, _ = _conv_shapes(inp.shape, weights.shape, geometry)
    out = np.empty((n, oc, oh, ow), dtype=np.float64)
    _conv_nested(np.ascontiguousarray(inp, dtype=np.float64),
                 np.ascontiguousarray(weights, dtype=np.float64),
                 geometry.stride, geometry.padding, geometry.dilation, float(pad_value), out)
    return out


@dataclass(frozen=True)
class BenchResult:
    n: int
    m: int
    k: int
    binary_ns: int
    float_ns: int
    theoretical: int = THEORETICAL_SPEEDUP

    @property
    def ratio(self) -> float:
        return self.float_ns / max(self.binary_ns, 1)

    HEADER = "n,m,k,binary_ns,float_ns,ratio,theoretical"

    def csv_row(self) -> str:
        return f"{self.n},{self.m},{self.k},{self.binary_ns},{self.float_ns},{self.ratio:.2f},{self.theoretical}"


def bench_gemm(dims: GemmDims, repetitions: int = 1, seed: int = 0) -> list[BenchResult]:
    """Time :func:`binary_gemm` against a naive scalar triple-loop float GEMM.

    The float baseline is an unvectorised ijk loop (no BLAS, no fast-math),
    so the ratio is an upper-bound style comparison, not a BLAS shoot-out.
    """
    rng = np.random.default_rng(seed)
    a = rng.choice(np.array([-1.0, 1.0], dtype=np.float32), size=(dims.n, dims.k))
    b = rng.choice(np.array([-1.0, 1.0], dtype=np.float32), size=(dims.k, dims.m))
    pa, pb = sign_quantize(a), sign_quantize(np.ascontiguousarray(b.T))
    fout = np.empty((dims.n, dims.m), dtype=np.float32)
    # warm the JIT so compilation is not timed
    binary_gemm(sign_quantize(a[:1, :1]), sign_quantize(b[:1, :1]))
    _naive_float_gemm(a[:1, :1], b[:1, :1], fout[:1, :1])
    results = []
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        binary_gemm(pa, pb)
        t1 = time.perf_counter_ns()
        _naive_float_gemm(a, b, fout)
        t2 = time.perf_counter_ns()
        results.append(BenchResult(dims.n, dims.m, dims.k, t1 - t0, t2 - t1))
    return results
