"""Configuration settings for the hierarchical segmentation project."""
import logging
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Project paths
PROJECT_ROOT = Path(__file__).parent.parent
DATA_DIR = Path(os.getenv("HIERSEG_DATA_DIR", str(PROJECT_ROOT / "data")))
RUNS_DIR = Path(os.getenv("HIERSEG_RUNS_DIR", str(PROJECT_ROOT / "runs")))
REPORTS_DIR = Path(os.getenv("HIERSEG_REPORTS_DIR", str(PROJECT_ROOT / "reports")))

# Results store (DuckDB)
RESULTS_DB_PATH = os.getenv("HIERSEG_RESULTS_DB", str(DATA_DIR / "results.duckdb"))

# Runtime
DEFAULT_SEED = int(os.getenv("HIERSEG_SEED", "0"))
NUM_THREADS = int(os.getenv("HIERSEG_NUM_THREADS", "4"))

# Logging Configuration
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("LOG_FILE")
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

# Checkpoint / manifest format versions
CHECKPOINT_FORMAT_VERSION = 1
MANIFEST_FORMAT_VERSION = 1

# Text encoder window (tokens per encoded segment)
TEXT_WINDOW = 512

# Postprocessing defaults
POSTPROCESS_DEFAULTS = {
    "score_threshold": 0.25,
    "mask_threshold": 0.5,
    "overlap_keep": 0.8,
    "nms_iou": 0.7,
}

# Open-vocabulary balancing factors (0.0 disables the auxiliary model)
OPEN_VOCAB_DEFAULTS = {
    "lambda_seen": 0.2,
    "lambda_novel": 0.45,
}


def configure_logging(level: str = LOG_LEVEL, log_file: str = LOG_FILE):
    """Configure root logging for command-line runs."""
    handlers = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO),
                        format=LOG_FORMAT, handlers=handlers, force=True)
