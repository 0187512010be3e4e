"""Dense and bit-packed tensors.

Dense tensors are plain numpy arrays (float32 or float64, NCHW for
feature maps). A :class:`BitTensor` stores a ±1 tensor with one bit per
element: the tensor is viewed as a matrix with ``shape[0]`` rows and
``prod(shape[1:])`` columns, and every row is packed LSB-first into 64-bit
little-endian words. Bit value 1 encodes +1, bit value 0 encodes -1.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import BadGeometry, CorruptPadding, NotBinary

WORD_BITS = 64
WORD_DTYPE = np.dtype("<u8")


def words_for(bits: int) -> int:
    return -(-bits // WORD_BITS)


@dataclass(frozen=True, eq=False)
class BitTensor:
    logical_shape: tuple[int, ...]
    words: np.ndarray  # (rows, words_per_row) uint64
    bits_per_row: int

    @property
    def rows(self) -> int:
        return self.words.shape[0]

    @property
    def words_per_row(self) -> int:
        return self.words.shape[1]

    def padding_mask(self) -> np.ndarray:
        """Per-word mask of the bits that lie beyond ``bits_per_row``."""
        mask = np.zeros(self.words_per_row, dtype=WORD_DTYPE)
        tail = self.bits_per_row % WORD_BITS
        if tail and self.words_per_row:
            mask[-1] = ~np.uint64((1 << tail) - 1)
        return mask

    def check_padding(self) -> None:
        if self.words.size and np.any(self.words & self.padding_mask()):
            raise CorruptPadding("nonzero bits beyond bits_per_row")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitTensor):
            return NotImplemented
        return (self.logical_shape == other.logical_shape
                and self.bits_per_row == other.bits_per_row
                and np.array_equal(self.words, other.words))

    @property
    def nbytes(self) -> int:
        return self.words.nbytes


def _as_matrix_shape(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 0:
        return 1, 1
    if len(shape) == 1:
        return 1, shape[0]
    return shape[0], prod(shape[1:])


def _pack_bool(bits: np.ndarray) -> np.ndarray:
    """Pack a (rows, k) boolean matrix into (rows, ceil(k/64)) uint64 words."""
    rows, k = bits.shape
    nwords = words_for(k)
    padded = np.zeros((rows, nwords * WORD_BITS), dtype=bool)
    padded[:, :k] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view(WORD_DTYPE).reshape(rows, nwords)


def _unpack_bool(words: np.ndarray, k: int) -> np.ndarray:
    rows = words.shape[0]
    as_bytes = np.ascontiguousarray(words, dtype=WORD_DTYPE).view(np.uint8)
    bits = np.unpackbits(as_bytes.reshape(rows, -1), axis=1, bitorder="little")
    return bits[:, :k].astype(bool)


def sign(x: np.ndarray) -> np.ndarray:
    """Elementwise sign with sign(0) = +1, same dtype as ``x``."""
    x = np.asarray(x)
    one = np.ones((), dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    return np.where(x >= 0, one, -one)


def sign_quantize(t: np.ndarray) -> BitTensor:
    t = np.asarray(t)
    shape = tuple(int(s) for s in t.shape)
    rows, k = _as_matrix_shape(shape)
    bits = (t >= 0).reshape(rows, k)
    return BitTensor(shape, _pack_bool(bits), k)


def pack_rows(rows: np.ndarray) -> BitTensor:
    """Pack a ±1 matrix (or N-D tensor, rows along axis 0) into bits."""
    rows = np.asarray(rows)
    if rows.size and not np.all((rows == 1) | (rows == -1)):
        raise NotBinary("pack_rows expects every element to be exactly +1 or -1")
    return sign_quantize(rows)


def unpack(b: BitTensor, dtype=np.float32) -> np.ndarray:
    b.check_padding()
    if prod(b.logical_shape) == 0:
        return np.zeros(b.logical_shape, dtype=dtype)
    bits = _unpack_bool(b.words, b.bits_per_row)
    out = np.where(bits, np.asarray(1, dtype), np.asarray(-1, dtype))
    return out.reshape(b.logical_shape)


def conv_output_size(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _check_geometry(h, w, kh, kw, stride, padding, dilation):
    if stride < 1 or dilation < 1 or padding < 0 or kh < 1 or kw < 1:
        raise BadGeometry(f"invalid stride={stride} padding={padding} dilation={dilation}")
    oh = conv_output_size(h, kh, stride, padding, dilation)
    ow = conv_output_size(w, kw, stride, padding, dilation)
    if oh < 1 or ow < 1:
        raise BadGeometry(f"output size {oh}x{ow} for input {h}x{w}, kernel {kh}x{kw}")
    return oh, ow


def im2col(t: np.ndarray, kernel: tuple[int, int], stride: int = 1, padding: int = 0,
           dilation: int = 1, pad_value: float = 0.0) -> np.ndarray:
    """Lower an NCHW tensor to a (C*kh*kw, N*OH*OW) patch matrix.

    Rows are ordered channel-major then kernel row, kernel column, which
    matches ``weights.reshape(OC, -1)``. Columns run over batch, output row,
    output column.
    """
    n, c, h, w = t.shape
    kh, kw = kernel
    oh, ow = _check_geometry(h, w, kh, kw, stride, padding, dilation)
    if padding:
        xp = np.full((n, c, h + 2 * padding, w + 2 * padding), pad_value, dtype=t.dtype)
        xp[:, :, padding:padding + h, padding:padding + w] = t
    else:
        xp = t
    cols = np.empty((c, kh, kw, n, oh, ow), dtype=t.dtype)
    for i in range(kh):
        r0 = i * dilation
        for j in range(kw):
            c0 = j * dilation
            patch = xp[:, :, r0:r0 + stride * (oh - 1) + 1:stride, c0:c0 + stride * (ow - 1) + 1:stride]
            cols[:, i, j] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * oh * ow)


def col2im(cols: np.ndarray, input_shape: tuple[int, int, int, int], kernel: tuple[int, int],
           stride: int = 1, padding: int = 0, dilation: int = 1) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch columns back to NCHW."""
    n, c, h, w = input_shape
    kh, kw = kernel
    oh, ow = _check_geometry(h, w, kh, kw, stride, padding, dilation)
    cols = cols.reshape(c, kh, kw, n, oh, ow)
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    for i in range(kh):
        r0 = i * dilation
        for j in range(kw):
            c0 = j * dilation
            xp[:, :, r0:r0 + stride * (oh - 1) + 1:stride,
               c0:c0 + stride * (ow - 1) + 1:stride] += cols[:, i, j].transpose(1, 0, 2, 3)
    if padding:
        return xp[:, :, padding:padding + h, padding:padding + w]
    return xp
