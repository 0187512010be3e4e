"""Finite-difference gradient checks for every differentiable layer (float64)."""
import numpy as np

from binnet.kernels import ConvGeometry
from binnet.nn import functional as F
from binnet.nn.binary import SteConfig, binary_conv_backward, binary_conv_forward
from binnet.tensor import sign
from oracles import numeric_grad, rel_error

TOL = 1e-6


def _away_from(x, points, margin=1e-3):
    for p in points:
        close = np.abs(x - p) < margin
        x[close] = p + np.where(x[close] >= p, margin, -margin) * 3
    return x


def check_conv(rng):
    n, c, oc = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    k, s, p, d = rng.integers(1, 4), rng.integers(1, 3), rng.integers(0, 2), rng.integers(1, 3)
    h = d * (k - 1) + 1 + rng.integers(0, 4)
    x, w, b = rng.standard_normal((n, c, h, h)), rng.standard_normal((oc, c, k, k)), rng.standard_normal(oc)
    g = ConvGeometry(s, p, d)
    y, ctx = F.conv2d_forward(x, w, b, g)
    r = rng.standard_normal(y.shape)
    gx, gw, gb = F.conv2d_backward(ctx, r)
    f = lambda: (F.conv2d_forward(x, w, b, g)[0] * r).sum()
    return max(rel_error(gx, numeric_grad(f, x)), rel_error(gw, numeric_grad(f, w)), rel_error(gb, numeric_grad(f, b)))


def check_dense(rng):
    n, i, o = rng.integers(1, 6), rng.integers(1, 8), rng.integers(1, 8)
    x, w, b = rng.standard_normal((n, i)), rng.standard_normal((o, i)), rng.standard_normal(o)
    y, ctx = F.dense_forward(x, w, b)
    r = rng.standard_normal(y.shape)
    gx, gw, gb = F.dense_backward(ctx, r)
    f = lambda: (F.dense_forward(x, w, b)[0] * r).sum()
    return max(rel_error(gx, numeric_grad(f, x)), rel_error(gw, numeric_grad(f, w)), rel_error(gb, numeric_grad(f, b)))


def check_batchnorm(rng):
    four = rng.random() < 0.5
    # at least 8 values per channel; with two the normalized output is +-1 whatever x is
    shape = (rng.integers(2, 4), rng.integers(1, 4), rng.integers(2, 5), rng.integers(2, 5)) if four \
        else (rng.integers(8, 16), rng.integers(1, 5))
    x = rng.standard_normal(shape) * rng.uniform(0.5, 3) + rng.uniform(-2, 2)
    c = shape[1]
    gamma, beta = rng.uniform(0.5, 2, c), rng.standard_normal(c)
    y, ctx = F.batchnorm_forward(x, gamma, beta, 1e-5, "train")
    r = rng.standard_normal(y.shape)
    gx, gg, gb = F.batchnorm_backward(ctx, r)
    f = lambda: (F.batchnorm_forward(x, gamma, beta, 1e-5, "train")[0] * r).sum()
    return max(rel_error(gx, numeric_grad(f, x)), rel_error(gg, numeric_grad(f, gamma)),
               rel_error(gb, numeric_grad(f, beta)))


def _distinct(rng, shape):
    # well-separated values so no pooling window has a near-tie
    vals = rng.permutation(int(np.prod(shape))).astype(float) * 0.1
    return vals.reshape(shape) + rng.uniform(-0.01, 0.01, shape)


def check_maxpool(rng):
    k, s, p = rng.integers(1, 4), rng.integers(1, 3), 0
    if k > 1 and rng.random() < 0.5:
        p = 1
    h = k + rng.integers(0, 5)
    x = _distinct(rng, (rng.integers(1, 3), rng.integers(1, 3), h, h))
    y, ctx = F.maxpool2d_forward(x, k, s, p)
    r = rng.standard_normal(y.shape)
    f = lambda: (F.maxpool2d_forward(x, k, s, p)[0] * r).sum()
    return rel_error(F.maxpool2d_backward(ctx, r), numeric_grad(f, x))


def check_avgpool(rng):
    k, s = rng.integers(1, 4), rng.integers(1, 3)
    p = rng.integers(0, 2) if k > 1 else 0
    h = k + rng.integers(0, 5)
    x = rng.standard_normal((rng.integers(1, 3), rng.integers(1, 3), h, h))
    y, ctx = F.avgpool2d_forward(x, k, s, p)
    r = rng.standard_normal(y.shape)
    f = lambda: (F.avgpool2d_forward(x, k, s, p)[0] * r).sum()
    return rel_error(F.avgpool2d_backward(ctx, r), numeric_grad(f, x))


def check_gap(rng):
    x = rng.standard_normal((rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 5)))
    y, shape = F.global_avgpool_forward(x)
    r = rng.standard_normal(y.shape)
    f = lambda: (F.global_avgpool_forward(x)[0] * r).sum()
    return rel_error(F.global_avgpool_backward(shape, r), numeric_grad(f, x))


def check_relu(rng):
    x = _away_from(rng.standard_normal((3, rng.integers(1, 10))), [0.0])
    y, mask = F.relu_forward(x)
    r = rng.standard_normal(y.shape)
    f = lambda: (F.relu_forward(x)[0] * r).sum()
    return rel_error(F.relu_backward(mask, r), numeric_grad(f, x))


def check_clip(rng):
    x = _away_from(rng.standard_normal((3, rng.integers(1, 10))) * 1.5, [-1.0, 1.0])
    y, mask = F.clip_forward(x)
    r = rng.standard_normal(y.shape)
    f = lambda: (F.clip_forward(x)[0] * r).sum()
    return rel_error(F.clip_backward(mask, r), numeric_grad(f, x))


def check_softmax_xent(rng):
    n, k = rng.integers(1, 6), rng.integers(2, 8)
    z = rng.standard_normal((n, k)) * 2
    labels = rng.integers(0, k, n)
    _, ctx = F.softmax_cross_entropy_forward(z, labels)
    g = F.softmax_cross_entropy_backward(ctx, 1.0)
    f = lambda: float(F.softmax_cross_entropy_forward(z, labels)[0])
    return rel_error(g, numeric_grad(f, z))


def check_binary_conv(rng):
    """Against the relaxed surrogate: the other operand held at its sign, this one clamped to [-1, 1]."""
    n, c, oc = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    k, s, p = rng.integers(1, 4), rng.integers(1, 3), rng.integers(0, 2)
    h = k + rng.integers(0, 4)
    x = _away_from(rng.uniform(-1.5, 1.5, (n, c, h, h)), [-1.0, 1.0, 0.0])
    w = _away_from(rng.uniform(-1.5, 1.5, (oc, c, k, k)), [-1.0, 1.0, 0.0])
    g = ConvGeometry(s, p)
    y, ctx = binary_conv_forward(x, w, SteConfig(), None, g)
    r = rng.standard_normal(y.shape)
    gx, gw = binary_conv_backward(ctx, r)
    fx = lambda: (F.conv2d_forward(np.clip(x, -1, 1), sign(w), None, g, pad_value=-1.0)[0] * r).sum()
    fw = lambda: (F.conv2d_forward(sign(x), np.clip(w, -1, 1), None, g, pad_value=-1.0)[0] * r).sum()
    return max(rel_error(gx, numeric_grad(fx, x)), rel_error(gw, numeric_grad(fw, w)))


CHECKS = {"fp-conv": check_conv, "dense": check_dense, "batchnorm": check_batchnorm, "maxpool": check_maxpool,
          "avgpool": check_avgpool, "global-avgpool": check_gap, "relu": check_relu, "clip": check_clip,
          "softmax-xent": check_softmax_xent, "binary-conv (STE surrogate)": check_binary_conv}


def worst_errors(instances=20, seed=0):
    rng = np.random.default_rng(seed)
    return {name: max(fn(rng) for _ in range(instances)) for name, fn in CHECKS.items()}
