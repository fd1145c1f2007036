"""
Logging configuration for the LAAT toolkit
"""

import logging
import logging.handlers
import os
from datetime import datetime
from typing import Dict, Optional, Sequence

from .config import get_log_dir, get_log_level, ensure_directory

DETAILED_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
SIMPLE_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def _rotating_handler(log_dir: str, filename: str, level: int) -> logging.Handler:
    handler = logging.handlers.RotatingFileHandler(
        filename=os.path.join(log_dir, filename),
        maxBytes=10*1024*1024,  # 10MB
        backupCount=5,
        encoding='utf-8'
    )
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(DETAILED_FORMAT, datefmt=DATE_FORMAT))
    return handler


def setup_logging(log_dir: Optional[str] = None, level: Optional[str] = None,
                  to_files: bool = True) -> logging.Logger:
    """Setup console and rotating-file logging for a CLI run"""
    log_dir = log_dir or get_log_dir()
    level_value = getattr(logging, (level or get_log_level()), logging.INFO)

    root_logger = logging.getLogger()
    root_logger.setLevel(level_value)
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level_value)
    console_handler.setFormatter(logging.Formatter(SIMPLE_FORMAT, datefmt=DATE_FORMAT))
    root_logger.addHandler(console_handler)

    if to_files:
        ensure_directory(log_dir)
        root_logger.addHandler(_rotating_handler(log_dir, 'laat.log', level_value))
        root_logger.addHandler(_rotating_handler(log_dir, 'errors.log', logging.ERROR))

        runs_logger = logging.getLogger('laat.runs')
        runs_logger.setLevel(logging.INFO)
        runs_logger.handlers.clear()
        runs_logger.addHandler(_rotating_handler(log_dir, 'runs.log', logging.INFO))
        runs_logger.propagate = False

    # numba's compiler is chatty at DEBUG
    logging.getLogger('numba').setLevel(logging.WARNING)

    return root_logger


def log_run_summary(command: str, seed: Optional[int], input_digest: Optional[str],
                    duration: float, peak_memory_mb: float, outputs: Sequence[str],
                    extra: Optional[Dict[str, object]] = None):
    """Log one line per finished CLI command to the dedicated runs logger"""
    runs_logger = logging.getLogger('laat.runs')

    log_data = {
        'timestamp': datetime.now().isoformat(),
        'command': command,
        'seed': seed,
        'input_digest': (input_digest[:12] + '...') if input_digest else None,
        'duration': f"{duration:.3f}s",
        'peak_memory_mb': round(peak_memory_mb, 1),
        'outputs': list(outputs),
    }
    if extra:
        log_data.update(extra)

    runs_logger.info(f"Run: {log_data}")
