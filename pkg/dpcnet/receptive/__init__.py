"""
Receptive Package
图感受野、梯度感受野、统计与着色导出
"""
from dpcnet.receptive.field import (
    ReceptiveField,
    RfStats,
    rf_compute,
    network_rf,
    rf_empirical,
    rf_stats,
    positive_construction,
)
from dpcnet.receptive.export import rf_export, rf_members_from_colors

__all__ = [
    "ReceptiveField",
    "RfStats",
    "rf_compute",
    "network_rf",
    "rf_empirical",
    "rf_stats",
    "positive_construction",
    "rf_export",
    "rf_members_from_colors",
]
