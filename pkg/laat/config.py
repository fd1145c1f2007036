"""
Environment Configuration - LAAT toolkit

Resolves settings that come from the environment rather than from a run
config: worker thread cap, log directory and level.

Usage:
    from laat.config import get_threads, get_log_dir

    threads = get_threads(cli_value)
    log_dir = get_log_dir()
"""

import os
from typing import Optional

import dotenv
dotenv.load_dotenv()


def get_threads(cli_value: Optional[int] = None) -> int:
    """
    Worker thread cap.

    The --threads flag wins; LAAT_THREADS is the fallback; otherwise 1.

    Returns:
        int: number of threads, at least 1
    """
    if cli_value is not None:
        return max(1, int(cli_value))
    env_value = os.getenv('LAAT_THREADS')
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            return 1
    return 1


def get_log_dir() -> str:
    """Directory for rotating log files (LAAT_LOG_DIR, default ./logs)"""
    return os.getenv('LAAT_LOG_DIR', 'logs')


def get_log_level() -> str:
    """Root log level name (LAAT_LOG_LEVEL, default INFO)"""
    return os.getenv('LAAT_LOG_LEVEL', 'INFO').upper()


def ensure_directory(path: str) -> str:
    """Create the directory if missing and return it."""
    if path and not os.path.exists(path):
        os.makedirs(path, exist_ok=True)
    return path


__all__ = ['get_threads', 'get_log_dir', 'get_log_level', 'ensure_directory']
