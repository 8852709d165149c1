"""
Metrics Package
"""
from dpcnet.metrics.confusion import ConfusionMatrix, cm_update, miou, macc, oacc

__all__ = ["ConfusionMatrix", "cm_update", "miou", "macc", "oacc"]
