"""
DPCNet Package
点云空洞点卷积（DPC）引擎：近邻搜索、点卷积层、分割/分类网络、感受野分析
"""
__version__ = "1.0.0"
