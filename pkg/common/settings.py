"""
Environment configuration and logging setup.

Environment variables (see .env.example):
    CONE_SHAP_LOG              log level (DEBUG, INFO, WARNING, ...)
    CONE_SHAP_JOBS             default worker count for --jobs
    CONE_SHAP_WORKDIR          default pipeline directory
    CONE_SHAP_ADAPTER_TIMEOUT  seconds to wait for an adapter response
"""

import logging
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str = None) -> None:
    """Configure root logging from CONE_SHAP_LOG (or an explicit level)."""
    log_level = (level or os.getenv("CONE_SHAP_LOG", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format=LOG_FORMAT,
    )


def default_jobs() -> int:
    return max(1, int(os.getenv("CONE_SHAP_JOBS", "1")))


def default_workdir() -> Path:
    return Path(os.getenv("CONE_SHAP_WORKDIR", "output"))


def adapter_timeout() -> float:
    return float(os.getenv("CONE_SHAP_ADAPTER_TIMEOUT", "15"))
