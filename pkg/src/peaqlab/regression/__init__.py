from .ann import AnnMapping, apply_reference_ann, load_ann
from .mars import Hinge, MarsConfig, MarsModel, gcv, mars_fit, mars_predict

__all__ = [
    "AnnMapping",
    "Hinge",
    "MarsConfig",
    "MarsModel",
    "apply_reference_ann",
    "gcv",
    "load_ann",
    "mars_fit",
    "mars_predict",
]
