"""
Convolution with xor and popcount
=================================

A binary convolution is lowered with im2col, each patch is packed along the
C*kh*kw axis and the GEMM runs on words. Padding reads as -1, and the result
matches a float nested-loop convolution exactly.
"""
import numpy as np

from binnet.kernels import ConvGeometry, GemmDims, bench_gemm, binary_conv2d, float_conv2d_ref
from binnet.tensor import sign, sign_quantize

rng = np.random.default_rng(1)
x = rng.standard_normal((2, 8, 12, 12))
w = rng.standard_normal((16, 8, 3, 3))
g = ConvGeometry(stride=2, padding=1, dilation=1)

y = binary_conv2d(sign_quantize(x), sign_quantize(w), g)
ref = float_conv2d_ref(sign(x), sign(w), g, pad_value=-1.0)
print("output", y.shape, y.dtype, "exact match:", np.array_equal(y, ref))
print("values lie in [-k, k] with the parity of k = 72:", np.unique(y % 2), np.abs(y).max())

# timing against a scalar triple loop in float32
print("\n" + "n,m,k,binary_ns,float_ns,ratio,theoretical")
for r in bench_gemm(GemmDims(512, 512, 512), repetitions=3):
    print(r.csv_row())
