import json
import logging
import math
import os
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

LOGGER_NAME = 'cubature'
LOG_FORMAT = '[%(asctime)s] %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
MODULE_LOGGERS = ('index_basis', 'quadrature', 'adaptive', 'sampling', 'model', 'greeks',
                  'reduction_cv', 'benchmark_tables', 'cli')


# =====================================================
# HELPER FUNCTIONS
# =====================================================
def get_date_based_folder(base_dir: str, subfolder: str = "") -> str:
    """
    Dated output folder <base_dir>[/<subfolder>]/<yyyy-mm-dd>, created on demand

    Args:
        base_dir: Report or log base folder
        subfolder: Optional level between the base and the date

    Returns:
        Path to the folder
    """
    parts = [base_dir, subfolder] if subfolder else [base_dir]
    folder = os.path.join(*parts, datetime.now().strftime('%Y-%m-%d'))
    os.makedirs(folder, exist_ok=True)
    return folder


def report_base_dir() -> str:
    return os.getenv('CUBATURE_REPORT_DIR', 'reports')


# =====================================================
# LOGGING CONFIGURATION
# =====================================================
def setup_logging(level: int = logging.INFO, log_dir: Optional[str] = None) -> logging.Logger:
    """
    Configure the package logger

    Console output goes to stderr so stdout only carries JSON results. A log
    file is added under <log_dir>/<yyyy-mm-dd>/ when log_dir or
    CUBATURE_LOG_DIR is set.

    Args:
        level: Logging level for every handler
        log_dir: Optional base folder for log files

    Returns:
        Configured logger instance
    """
    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT)

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level)
    # Remove existing handlers to avoid duplication
    logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # library modules log under their own names; route them through the same handlers
    for name in MODULE_LOGGERS:
        module_logger = logging.getLogger(name)
        module_logger.setLevel(level)
        module_logger.handlers.clear()
        module_logger.propagate = False
        module_logger.addHandler(console_handler)

    log_dir = log_dir or os.getenv('CUBATURE_LOG_DIR')
    if log_dir:
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        log_filename = os.path.join(get_date_based_folder(log_dir), f'cubature_{timestamp}.log')
        file_handler = logging.FileHandler(log_filename, encoding='utf-8')
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
        for name in MODULE_LOGGERS:
            logging.getLogger(name).addHandler(file_handler)
        logger.info(f"Logging configured. Log file: {log_filename}")
    return logger


# =====================================================
# JSON
# =====================================================
def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy types to Python and non-finite floats to None"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if hasattr(value, 'value') and isinstance(getattr(value, 'value'), str):
        return value.value
    return value


def dumps(document: Any) -> str:
    return json.dumps(to_jsonable(document), indent=2, ensure_ascii=False, allow_nan=False, default=str)


# =====================================================
# REPORT FILES
# =====================================================
def write_json_report(results: Dict[str, Any], name: str, base_dir: Optional[str] = None) -> str:
    """
    Write a machine-readable JSON report into the dated report folder

    Args:
        results: Report document
        name: File stem, a timestamp is appended
        base_dir: Report base folder, defaults to CUBATURE_REPORT_DIR or 'reports'

    Returns:
        Path to the JSON file, or "" when writing failed
    """
    logger = logging.getLogger(LOGGER_NAME)
    reports_dir = get_date_based_folder(base_dir or report_base_dir())
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    json_file = os.path.join(reports_dir, f'{name}_{timestamp}.json')

    try:
        with open(json_file, 'w', encoding='utf-8') as f:
            f.write(dumps(results))
        logger.info(f"JSON report generated: {json_file}")
        return json_file
    except OSError as e:
        logger.error(f"Failed to generate JSON report: {str(e)}")
        return ""


def write_summary_table(rows: List[Dict[str, Any]], name: str, base_dir: Optional[str] = None) -> str:
    """
    Write table rows as CSV (17 significant digits) into the dated report folder

    Args:
        rows: One dict per table row
        name: File stem, a timestamp is appended
        base_dir: Report base folder, defaults to CUBATURE_REPORT_DIR or 'reports'

    Returns:
        Path to the CSV file, or "" when writing failed
    """
    logger = logging.getLogger(LOGGER_NAME)
    reports_dir = get_date_based_folder(base_dir or report_base_dir())
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    summary_file = os.path.join(reports_dir, f'{name}_{timestamp}.csv')

    try:
        summary_df = pd.DataFrame([to_jsonable(row) for row in rows])
        summary_df.to_csv(summary_file, index=False, float_format='%.17g')
        logger.info(f"Summary table generated: {summary_file}")
        return summary_file
    except OSError as e:
        logger.error(f"Failed to generate summary table: {str(e)}")
        return ""
