"""Aggregation of ordinal crowd ratings.

The main model (``odm``) treats each rating as either a thresholded noisy
reading of the instance's real-valued truth or as spam, and is fitted by
variational Bayes. Dawid-Skene, GLAD, Ord-Binary, a continuous Gaussian
model and mean/median/majority baselines are included for comparison.
"""
from . import baselines, continuous, dawid_skene, evaluation, glad, methods, numerics, odm, ord_binary
from .dataset import (
    CategoryMap,
    GroundTruth,
    OrdinalScale,
    RatingsTable,
    build_category_map,
    load_ratings,
    load_truth,
)
from .fitting import FitConfig, ModelFit

__all__ = [
    "CategoryMap", "FitConfig", "GroundTruth", "ModelFit", "OrdinalScale", "RatingsTable",
    "baselines", "build_category_map", "continuous", "dawid_skene", "evaluation", "glad",
    "load_ratings", "load_truth", "methods", "numerics", "odm", "ord_binary",
]
__version__ = "0.1.0"
