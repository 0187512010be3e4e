"""
Packing signs into machine words
================================

Binary tensors hold one bit per value: 1 for +1 and 0 for -1, packed
LSB-first into 64-bit words along the reduction axis. The dot product of two
packed ±1 vectors is k - 2*popcount(a ^ b).
"""
import numpy as np

from binnet.kernels import binary_dot
from binnet.tensor import pack_rows, sign_quantize, unpack

rng = np.random.default_rng(0)

# sign with sign(0) = +1, stored as bits
x = np.array([[-0.5, 0.0, 3.2, -7.0, 1e-9]])
b = sign_quantize(x)
print("values      ", x[0])
print("packed word ", bin(int(b.words[0, 0])), "k =", b.bits_per_row)
print("unpacked    ", unpack(b)[0])

# a 3x130 matrix spans three words per row; the top 62 bits of the last word stay zero
m = rng.choice([-1.0, 1.0], size=(3, 130))
pm = pack_rows(m)
print("\nwords per row:", pm.words_per_row, " padding clean:", (pm.words[:, -1] >> np.uint64(2) == 0).all())
assert (unpack(pm, np.float64) == m).all()

# xor + popcount reproduces the float dot product exactly
a, c = m[0], m[1]
print("\nfloat dot  ", int(a @ c))
print("binary dot ", binary_dot(pm.words[0], pm.words[1], 130))

# memory: 32x smaller than float32
big = rng.standard_normal((256, 4608)).astype(np.float32)
print(f"\nfloat32 {big.nbytes / 1024:.0f} KiB -> packed {sign_quantize(big).nbytes / 1024:.0f} KiB")
