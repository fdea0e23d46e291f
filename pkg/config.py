"""
Runtime settings read from environment variables.
"""
import logging
import os


def _positive_int(name: str, default: str) -> int:
    raw = os.getenv(name, default)
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise ValueError(f"{name} environment variable must be an integer, got {raw!r}.")
    if value < 1:
        raise ValueError(f"{name} environment variable must be a positive integer.")
    return value


# Worker threads for the pointwise grid kernel; --threads on the CLI overrides it
THREADS = _positive_int('PPFLOW_THREADS', '1')

# Below this many grid points the kernel runs inline
PARALLEL_MIN_POINTS = _positive_int('PPFLOW_PARALLEL_MIN_POINTS', '4096')

LOG_LEVEL = os.getenv('PPFLOW_LOG_LEVEL', 'WARNING').upper()
_LEVEL_NAMES = (logging.getLevelNamesMapping() if hasattr(logging, 'getLevelNamesMapping')
                else dict(logging._nameToLevel))  # Python < 3.11
if LOG_LEVEL not in _LEVEL_NAMES:
    raise ValueError(f"PPFLOW_LOG_LEVEL environment variable has unknown level {LOG_LEVEL!r}.")
