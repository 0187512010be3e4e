from .checkpoint import Checkpoint, restore, snapshot
from .data import Dataset, load_idx_dataset, read_idx, synthetic_dataset, write_idx
from .experiments import bn_absorption_demo, pretrain_finetune_experiment
from .loop import TrainConfig, evaluate, evaluate_model, topk_correct, train
