"""
Schemas Package
"""
from dpcnet.schemas.run_config import (
    Mode,
    CropSpec,
    LrSchedule,
    LayerSpec,
    NetworkConfig,
    TrainingConfig,
    PathsConfig,
    RunConfig,
    AblationConfig,
    BenchConfig,
    TraceConfig,
    dilation_schedule,
    make_layers,
    RF_GRID_ROWS,
    RF_GRID_DEPTHS,
)
from dpcnet.schemas.reports import (
    SCHEMA_VERSION,
    MetricsReport,
    HistoryRow,
    TrainHistory,
    RfStatsModel,
    RfCell,
    RfReport,
    AblationRow,
    AblationReport,
    BenchReport,
    ManifestEntry,
    DatasetManifest,
)

__all__ = [
    "Mode",
    "CropSpec",
    "LrSchedule",
    "LayerSpec",
    "NetworkConfig",
    "TrainingConfig",
    "PathsConfig",
    "RunConfig",
    "AblationConfig",
    "BenchConfig",
    "TraceConfig",
    "dilation_schedule",
    "make_layers",
    "RF_GRID_ROWS",
    "RF_GRID_DEPTHS",
    "SCHEMA_VERSION",
    "MetricsReport",
    "HistoryRow",
    "TrainHistory",
    "RfStatsModel",
    "RfCell",
    "RfReport",
    "AblationRow",
    "AblationReport",
    "BenchReport",
    "ManifestEntry",
    "DatasetManifest",
]
