"""
DPCNet 配置管理模块
支持从环境变量和 .env 文件加载配置
"""
from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """进程级配置类（运行实验的超参数见 dpcnet.schemas.run_config）"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="allow",  # 允许额外字段
    )

    # ========== 日志配置 ==========
    LOG_LEVEL: str = "INFO"
    LOG_FILE: str = "logs/dpcnet.log"  # 置空则只输出到控制台

    # ========== 路径配置 ==========
    DATA_DIR: str = "./data"
    CHECKPOINT_DIR: str = "./checkpoints"
    REPORT_DIR: str = "./reports"

    # ========== 运行配置 ==========
    THREADS: int = 1
    DETERMINISTIC: bool = True  # 固定归约顺序，保证逐位可复现
    DEFAULT_SEED: int = 0

    # ========== 算法常量 ==========
    KD_LEAF_SIZE: int = 16
    TEXT_PRECISION: int = 6  # 文本点云保存的小数位
    GRAD_CHECK_STEP: float = 1e-5  # 中心差分步长
    RF_GRAD_EPS: float = 1e-12  # 梯度感受野的判定阈值


@lru_cache()
def get_settings() -> Settings:
    """获取配置单例（带缓存）"""
    return Settings()


# 导出配置实例
settings = get_settings()
