import os
import logging
from pathlib import Path
from dotenv import load_dotenv
load_dotenv()


def get_output_dir() -> Path:
    """Directory run/sweep/refine outputs go to when the config names none"""
    return Path(os.environ.get("CHEMOTAXIS_OUTPUT_DIR", "output"))


def get_log_level() -> int:
    name = os.environ.get("CHEMOTAXIS_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ValueError(f"CHEMOTAXIS_LOG_LEVEL not a logging level: {name}")
    return level


def get_sweep_jobs() -> int:
    """joblib worker count for mu sweeps (1 keeps everything in-process)"""
    raw = os.environ.get("CHEMOTAXIS_SWEEP_JOBS", "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise ValueError(f"CHEMOTAXIS_SWEEP_JOBS must be an integer, got {raw!r}")
    if jobs == 0:
        raise ValueError("CHEMOTAXIS_SWEEP_JOBS must be nonzero")
    return jobs


# Quadrature and floor constants used across modules
DEFAULT_QUAD_TOL = 1e-8
SIMPSON_MAX_DEPTH = 30
U_FLOOR_FACTOR = 1e-12
