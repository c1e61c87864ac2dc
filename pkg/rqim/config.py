"""Runtime settings for the rqim toolkit"""
import logging
import os

from dotenv import load_dotenv

load_dotenv()

# Environment variables
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
RQIM_WORKERS = int(os.environ.get("RQIM_WORKERS", "1"))

# Experiment defaults (step size, scaling factor, dither, alphabet)
DEFAULT_DELTA = 1.0
DEFAULT_ALPHA = 0.8675
DEFAULT_K = 0.0
DEFAULT_M_CARD = 2

# HS baseline
DEFAULT_DIGITS = 8
USABILITY_PAIR_INDEX = 3

# Verification / detection
TOLERANCE_BINARY64 = 1e-9
TOLERANCE_BINARY32 = 1e-5
DEFAULT_THRESHOLD = 0.1

DEFAULT_FRACTIONS = (20, 40, 60, 80, 100)
DEFAULT_SAMPLES = 1_000_000

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str = None) -> None:
    """Configure root logging on stderr"""
    logging.basicConfig(level=level or LOG_LEVEL, format=LOG_FORMAT)
