"""
Utils Package
"""
from dpcnet.utils.logger import carry_context, logger, run_log, setup_logger
from dpcnet.utils.hashing import canonical_json, short_hash
from dpcnet.utils.artifacts import write_artifact

__all__ = ["logger", "setup_logger", "run_log", "carry_context", "canonical_json", "short_hash", "write_artifact"]
