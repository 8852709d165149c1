"""
NN Package
最小稠密数值：MLP、交叉熵、手写反向、Adam、指数衰减学习率、检查点
"""
from dpcnet.nn.init import init_params, glorot_bound, as_rng
from dpcnet.nn.mlp import Mlp, MlpTape, MlpGrads, mlp_forward, mlp_backward, as_matrix, relu
from dpcnet.nn.losses import softmax_cross_entropy, log_softmax, softmax
from dpcnet.nn.optim import Adam, AdamState, adam_step
from dpcnet.nn.gradcheck import numeric_grad, relative_error
from dpcnet.nn.checkpoint import Checkpoint, save_checkpoint, load_checkpoint
from dpcnet.schemas.run_config import LrSchedule

__all__ = [
    "init_params",
    "glorot_bound",
    "as_rng",
    "Mlp",
    "MlpTape",
    "MlpGrads",
    "mlp_forward",
    "mlp_backward",
    "as_matrix",
    "relu",
    "softmax_cross_entropy",
    "log_softmax",
    "softmax",
    "Adam",
    "AdamState",
    "adam_step",
    "LrSchedule",
    "numeric_grad",
    "relative_error",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]
