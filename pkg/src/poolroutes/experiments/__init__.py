from .sptp import SpTpConfig, sp_tp_probability, sp_tp_sweep, sp_tp_vgg8
from .stats import ProbabilityEstimate
from .training import DivergenceError, TrainConfig, TrainReport, default_config, evaluate, train
from .tree import ValueTree, tree_disagreement_prob, tree_global, tree_greedy

__all__ = [
    "ProbabilityEstimate", "SpTpConfig", "sp_tp_probability", "sp_tp_sweep", "sp_tp_vgg8",
    "DivergenceError", "TrainConfig", "TrainReport", "default_config", "evaluate", "train",
    "ValueTree", "tree_disagreement_prob", "tree_global", "tree_greedy",
]
