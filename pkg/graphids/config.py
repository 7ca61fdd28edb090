# graphids/config.py - Environment-driven configuration classes

import os
from typing import List

from .errors import ConfigError
from .extensions import logger


def _env_list(name: str, default: str) -> List[str]:
    return [item.strip() for item in os.environ.get(name, default).split(",") if item.strip()]


def _env_floats(name: str, default: str) -> List[float]:
    try:
        return [float(item) for item in _env_list(name, default)]
    except ValueError as e:
        raise ConfigError(f"{name} must be a comma-separated list of numbers", variable=name) from e


class BaseConfig:
    # Logging and parallelism
    LOG_LEVEL = os.environ.get("GIDS_LOG_LEVEL", "INFO")
    WORKERS = int(os.environ.get("GIDS_WORKERS", "1"))
    SEED = int(os.environ.get("GIDS_SEED", "42"))

    # Input format (CIC-IDS2017 CICFlowMeter export)
    SRC_COLUMN = os.environ.get("GIDS_SRC_COLUMN", "Source IP")
    DST_COLUMN = os.environ.get("GIDS_DST_COLUMN", "Destination IP")
    TIMESTAMP_COLUMN = os.environ.get("GIDS_TIMESTAMP_COLUMN", "Timestamp")
    LABEL_COLUMN = os.environ.get("GIDS_LABEL_COLUMN", "Label")
    DELIMITER = os.environ.get("GIDS_DELIMITER", ",")
    ENCODING = os.environ.get("GIDS_ENCODING", "utf-8")
    TIMESTAMP_FORMAT = os.environ.get("GIDS_TIMESTAMP_FORMAT") or None
    DAYFIRST = os.environ.get("GIDS_DAYFIRST", "false").lower() == "true"
    BENIGN_LABEL = os.environ.get("GIDS_BENIGN_LABEL", "Benign")

    # Graph feature extraction
    SIGMAS = _env_list("GIDS_SIGMAS", "1,5,N")
    POLICIES = _env_list("GIDS_POLICIES", "unweighted,weighted,mixed")
    EIGEN_TOL = float(os.environ.get("GIDS_EIGEN_TOL", "1e-8"))
    EIGEN_MAX_ITER = int(os.environ.get("GIDS_EIGEN_MAX_ITER", "1000"))

    # SVM solver
    SVM_TOL = float(os.environ.get("GIDS_SVM_TOL", "1e-3"))
    SVM_MAX_PASSES = int(os.environ.get("GIDS_SVM_MAX_PASSES", "10"))
    KERNEL_CACHE_BYTES = int(os.environ.get("GIDS_KERNEL_CACHE_BYTES", str(256 * 1024 * 1024)))

    # Model selection
    FFS_CAP = int(os.environ.get("GIDS_FFS_CAP", "8"))
    FFS_EPSILON = float(os.environ.get("GIDS_FFS_EPSILON", "1e-4"))
    FFS_GAMMA = float(os.environ.get("GIDS_FFS_GAMMA", "1.0"))
    FFS_C = float(os.environ.get("GIDS_FFS_C", "1.0"))
    CV_FOLDS = int(os.environ.get("GIDS_CV_FOLDS", "5"))
    ROBUSTNESS_FOLDS = int(os.environ.get("GIDS_ROBUSTNESS_FOLDS", "10"))
    C_GRID = _env_floats("GIDS_C_GRID", "0.1,1,5,10,100,1000,10000,100000")
    GAMMA_GRID = _env_floats("GIDS_GAMMA_GRID", "0.01,0.1,0.5,1")

    @classmethod
    def validate_config(cls):
        """Reject impossible settings and log the effective ones"""
        problems = []
        if cls.WORKERS < 1:
            problems.append("WORKERS must be >= 1")
        if cls.CV_FOLDS < 2 or cls.ROBUSTNESS_FOLDS < 2:
            problems.append("fold counts must be >= 2")
        if cls.FFS_CAP < 1:
            problems.append("FFS_CAP must be >= 1")
        if cls.SVM_TOL <= 0 or cls.SVM_MAX_PASSES < 1:
            problems.append("SVM_TOL must be > 0 and SVM_MAX_PASSES >= 1")
        if not cls.C_GRID or not cls.GAMMA_GRID:
            problems.append("hyperparameter grids must be non-empty")
        if any(v <= 0 for v in list(cls.C_GRID) + list(cls.GAMMA_GRID)):
            problems.append("grid values must be positive")
        if cls.KERNEL_CACHE_BYTES < 0:
            problems.append("KERNEL_CACHE_BYTES must be >= 0")

        if problems:
            raise ConfigError("Invalid configuration: " + "; ".join(problems))

        logger.debug(f"Grids: C={cls.C_GRID} gamma={cls.GAMMA_GRID}")
        logger.debug(f"Matrix: sigma={cls.SIGMAS} omega={cls.POLICIES}")
        logger.debug(f"Seed {cls.SEED}, workers {cls.WORKERS}")
        return True


class DevelopmentConfig(BaseConfig):
    """Verbose logging for local experiments"""
    LOG_LEVEL = os.environ.get("GIDS_LOG_LEVEL", "DEBUG")


class ProductionConfig(BaseConfig):
    """Full-corpus runs"""
    LOG_LEVEL = os.environ.get("GIDS_LOG_LEVEL", "INFO")


class TestingConfig(BaseConfig):
    """Testing configuration"""
    TESTING = True
    LOG_LEVEL = "WARNING"
    WORKERS = 1
    SEED = 42
    KERNEL_CACHE_BYTES = 32 * 1024 * 1024


def get_config(name: str = None):
    """Get configuration class based on environment"""
    if name is None:
        name = os.environ.get("GIDS_ENV", "production")

    config_classes = {
        "development": DevelopmentConfig,
        "production": ProductionConfig,
        "testing": TestingConfig,
    }

    config_class = config_classes.get(name)
    if config_class is None:
        raise ConfigError(f"Unknown configuration '{name}'", choices=sorted(config_classes))

    config_class.validate_config()
    logger.debug(f"Loading {name} configuration: {config_class.__name__}")
    return config_class


__all__ = [
    "BaseConfig",
    "DevelopmentConfig",
    "ProductionConfig",
    "TestingConfig",
    "get_config",
]
