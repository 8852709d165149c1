"""
Services Package
数据生成、训练、评估、感受野追踪、消融与计时
"""
from dpcnet.services.datagen import cmd_gen_data, load_dataset
from dpcnet.services.evaluator import evaluate, evaluate_split, cmd_eval
from dpcnet.services.trainer import Trainer, TrainResult, train, cmd_train
from dpcnet.services.tracer import rf_grid, trace_cell, cmd_trace_rf, default_target
from dpcnet.services.benchmark import bench, time_forward, cmd_bench
from dpcnet.services.ablation import run_ablation, cmd_ablate, dilation_benefit

__all__ = [
    "cmd_gen_data",
    "load_dataset",
    "evaluate",
    "evaluate_split",
    "cmd_eval",
    "Trainer",
    "TrainResult",
    "train",
    "cmd_train",
    "rf_grid",
    "trace_cell",
    "cmd_trace_rf",
    "default_target",
    "bench",
    "time_forward",
    "cmd_bench",
    "run_ablation",
    "cmd_ablate",
    "dilation_benefit",
]
