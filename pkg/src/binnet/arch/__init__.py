from .builders import (RESNETE18_CIFAR, RESNETE18_IMAGENET, DenseNetConfig, ResNetEConfig, build_binary_densenet,
                       build_resnet_e, densenet_channel_plan, desk_densenet_config, merge_blocks, split_blocks)
from .config_io import build_from_config, dump_arch, dumps_config, load_arch, loads_config
from .spec import ArchSpec, LayerSpec
from .validate import Violation, validate_arch
