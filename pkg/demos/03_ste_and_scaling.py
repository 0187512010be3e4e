"""
Gradients through sign, and why scaling factors fade under BatchNorm
====================================================================

sign has zero gradient almost everywhere, so training passes the upstream
gradient through where |r| <= t_clip (STE), optionally shaped by the
approxsign envelope. Per-channel weight scaling is then shown to be
cancelled exactly by the BatchNorm that follows the convolution.
"""
import numpy as np

from binnet.nn import SteConfig, sign_backward
from binnet.train.experiments import bn_absorption_demo

r = np.linspace(-1.5, 1.5, 7)
g = np.ones_like(r)
print("r          ", r)
print("ste        ", sign_backward(r, g, SteConfig()))
print("approxsign ", sign_backward(r, g, SteConfig(backward_kind="approxsign")))
print("ste t=0.5  ", sign_backward(r, g, SteConfig(t_clip=0.5)))

rep = bn_absorption_demo(seed=0)
print("\nmean |error| vs full-precision conv")
print(f"  before BN: binary {rep.err_unscaled:.3f}  alpha {rep.err_alpha:.3f}  alpha*K {rep.err_alpha_K:.3f}")
print(f"  after BN:  binary {rep.err_unscaled_bn:.4f}  alpha {rep.err_alpha_bn:.4f}  alpha*K {rep.err_alpha_K_bn:.4f}")
print(f"max |BN(alpha*Y) - BN(Y)|   = {rep.max_bn_gap_alpha:.1e}   (per-channel scale is absorbed)")
print(f"max |BN(alpha*K*Y) - BN(Y)| = {rep.max_bn_gap_alpha_K:.1e}   (the spatial map K is not)")
