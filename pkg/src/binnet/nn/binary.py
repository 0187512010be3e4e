"""Sign activation, its surrogate gradients, and the binary convolution."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimMismatch, MissingContext
from ..kernels import ConvGeometry
from ..tensor import BitTensor, col2im, conv_output_size, im2col, sign, sign_quantize

BACKWARD_KINDS = ("ste", "approxsign")


@dataclass(frozen=True)
class SteConfig:
    t_clip: float = 1.0
    backward_kind: str = "ste"

    def __post_init__(self):
        if not self.t_clip > 0:
            raise ValueError(f"t_clip must be positive, got {self.t_clip}")
        if self.backward_kind not in BACKWARD_KINDS:
            raise ValueError(f"backward_kind must be one of {BACKWARD_KINDS}")


@dataclass
class ScalingFactors:
    """Output scaling of a binary convolution.

    When ``enabled`` the output is multiplied by the per-output-channel mean
    absolute weight and, if ``use_K``, by the spatial map of mean absolute
    input activation. ``alpha``/``K`` may be given explicitly to override the
    computed values.
    """
    enabled: bool = False
    use_K: bool = True
    alpha: np.ndarray | None = None
    K: np.ndarray | None = None


def sign_forward(r_i: np.ndarray) -> BitTensor:
    return sign_quantize(r_i)


def sign_backward(r_i: np.ndarray, upstream: np.ndarray, cfg: SteConfig = SteConfig()) -> np.ndarray:
    if r_i.shape != upstream.shape:
        raise DimMismatch(f"{r_i.shape} vs {upstream.shape}")
    inside = np.abs(r_i) <= cfg.t_clip
    if cfg.backward_kind == "ste":
        return np.where(inside, upstream, np.zeros_like(upstream))
    factor = np.where(r_i >= 0, 2 - 2 * r_i, 2 + 2 * r_i)
    return np.where(inside, upstream * factor, np.zeros_like(upstream)).astype(upstream.dtype, copy=False)


def compute_alpha(weights: np.ndarray) -> np.ndarray:
    return np.abs(weights).reshape(weights.shape[0], -1).mean(axis=1)


def compute_K(inp: np.ndarray, kernel: tuple[int, int], geometry: ConvGeometry = ConvGeometry()) -> np.ndarray:
    """Mean |activation| over channels, box-filtered with the conv window.

    Returns an (N, 1, OH, OW) map aligned with the convolution output.
    Out-of-bounds taps count as zero.
    """
    n = inp.shape[0]
    a = np.abs(inp).mean(axis=1, keepdims=True)
    cols = im2col(a, kernel, geometry.stride, geometry.padding, geometry.dilation, pad_value=0.0)
    kmap = cols.mean(axis=0)
    oh = conv_output_size(inp.shape[2], kernel[0], geometry.stride, geometry.padding, geometry.dilation)
    ow = conv_output_size(inp.shape[3], kernel[1], geometry.stride, geometry.padding, geometry.dilation)
    return kmap.reshape(n, 1, oh, ow)


def scaling_multiplier(x: np.ndarray, latent: np.ndarray, scale: ScalingFactors | None,
                       geometry: ConvGeometry) -> np.ndarray | None:
    """Broadcastable alpha (x K) multiplier for the conv output, or None."""
    if scale is None or not scale.enabled:
        return None
    oc, _, kh, kw = latent.shape
    alpha = compute_alpha(latent) if scale.alpha is None else np.asarray(scale.alpha)
    mult = alpha.reshape(1, oc, 1, 1).astype(x.dtype)
    if scale.use_K:
        k_map = compute_K(x, (kh, kw), geometry) if scale.K is None else np.asarray(scale.K)
        mult = mult * k_map.astype(x.dtype)
    return mult


@dataclass
class BinaryConvContext:
    x: np.ndarray
    latent: np.ndarray
    cols: np.ndarray
    wmat: np.ndarray
    geometry: ConvGeometry
    cfg: SteConfig
    sign_input: bool
    scale: np.ndarray | None = None
    consumed: bool = field(default=False)


def binary_conv_forward(x: np.ndarray, latent: np.ndarray, cfg: SteConfig = SteConfig(),
                        scale: ScalingFactors | None = None, geometry: ConvGeometry = ConvGeometry(),
                        sign_input: bool = True) -> tuple[np.ndarray, BinaryConvContext]:
    """Training-path binary convolution on ±1 floats.

    Exactly equal to ``kernels.binary_conv2d`` on the packed operands (the
    products of ±1 values are exact in float). Padding reads as -1.
    """
    if x.ndim != 4 or latent.ndim != 4 or x.shape[1] != latent.shape[1]:
        raise DimMismatch(f"input {x.shape} incompatible with weights {latent.shape}")
    n = x.shape[0]
    oc, _, kh, kw = latent.shape
    xb = sign(x) if sign_input else x
    wmat = sign(latent).reshape(oc, -1).astype(x.dtype, copy=False)
    cols = im2col(xb, (kh, kw), geometry.stride, geometry.padding, geometry.dilation, pad_value=-1)
    out = wmat @ cols
    oh = conv_output_size(x.shape[2], kh, geometry.stride, geometry.padding, geometry.dilation)
    ow = conv_output_size(x.shape[3], kw, geometry.stride, geometry.padding, geometry.dilation)
    y = out.reshape(oc, n, oh, ow).transpose(1, 0, 2, 3)
    mult = scaling_multiplier(x, latent, scale, geometry)
    if mult is not None:
        y = y * mult
    ctx = BinaryConvContext(x, latent, cols, wmat, geometry, cfg, sign_input, mult)
    return np.ascontiguousarray(y), ctx


def binary_conv_backward(ctx: BinaryConvContext | None, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """STE gradients for both operands; scaling factors act as constants."""
    if ctx is None or ctx.consumed:
        raise MissingContext("binary conv backward needs an unconsumed forward context")
    ctx.consumed = True
    g = upstream if ctx.scale is None else upstream * ctx.scale
    oc, _, kh, kw = ctx.latent.shape
    gmat = g.transpose(1, 0, 2, 3).reshape(oc, -1)
    gw = (gmat @ ctx.cols.T).reshape(ctx.latent.shape)
    gcols = ctx.wmat.T @ gmat
    gx = col2im(gcols, ctx.x.shape, (kh, kw), ctx.geometry.stride, ctx.geometry.padding, ctx.geometry.dilation)
    if ctx.sign_input:
        gx = sign_backward(ctx.x, gx, ctx.cfg)
    gw = sign_backward(ctx.latent, gw.astype(ctx.latent.dtype, copy=False), ctx.cfg)
    ctx.cols = None
    return gx, gw
