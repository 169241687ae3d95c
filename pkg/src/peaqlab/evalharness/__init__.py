from .bootstrap import BootstrapConfig, BootstrapReport, bootstrap_run, make_split, train_size
from .metrics import aes, aggregate_ci, pearson, spearman

__all__ = [
    "BootstrapConfig",
    "BootstrapReport",
    "aes",
    "aggregate_ci",
    "bootstrap_run",
    "make_split",
    "pearson",
    "spearman",
    "train_size",
]
