"""
Runtime settings untuk Infoflow Lab
Dibaca dari environment (.env didukung) dengan default yang aman

"""

import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

PROJECT_ROOT = Path(__file__).resolve().parent.parent

# Enumeration guard untuk check_noninterference / has_effect
NI_BUDGET = int(os.getenv("INFOFLOW_NI_BUDGET", "1000000"))

# |y|! cutoff untuk permutation test method=exact
EXACT_BUDGET = int(os.getenv("INFOFLOW_EXACT_BUDGET", "10000000"))

MC_SAMPLES = int(os.getenv("INFOFLOW_MC_SAMPLES", "100000"))

ALPHA = float(os.getenv("INFOFLOW_ALPHA", "0.05"))

LOG_LEVEL = os.getenv("INFOFLOW_LOG_LEVEL", "INFO")
LOG_DIR = Path(os.getenv("INFOFLOW_LOG_DIR", str(PROJECT_ROOT / "logs")))

DATABASE_URL = os.getenv(
    "DATABASE_URL",
    f"sqlite:///{PROJECT_ROOT / 'infoflow.db'}"  # Default: SQLite lokal di project root
)

# Tracker + experiment defaults
SIMULATOR_CONFIG = Path(os.getenv(
    "INFOFLOW_SIMULATOR_CONFIG",
    str(PROJECT_ROOT / "simulator" / "config.json")
))
