"""Progress signals for training, evaluation and outputs."""
from signalslot.signal import Signal

epoch_end = Signal(args=["fold", "epoch", "breakdown"])
fold_end = Signal(args=["fold", "report"])
pairs_empty = Signal(args=["covariate", "epoch"])
file_written = Signal(args=["path"])
