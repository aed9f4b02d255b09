from .checkpoint import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from .crossval import CrossValidation, fold_splits, run_fold, train_cv
from .loop import TrainConfig, TrainResult, morphism_flags, train
