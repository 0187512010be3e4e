from .autograd import Parameter, Tape, Var
from .binary import (ScalingFactors, SteConfig, binary_conv_backward, binary_conv_forward, compute_alpha,
                     compute_K, sign_backward, sign_forward)
from .functional import batchnorm_backward, batchnorm_forward
from .layers import (AvgPool2d, BatchNorm2d, BinaryConv2d, Clip, Conv2d, Dense, GlobalAvgPool, MaxPool2d,
                     Module, ReLU, Sign, add, clip, concat, relu, softmax_cross_entropy)
from .optim import SGD, Adam, adam_step, clamp_latents, sgd_momentum_step
