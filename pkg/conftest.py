import sys
from pathlib import Path

# src/ dan simulator/ di-import sebagai package dari project root
sys.path.insert(0, str(Path(__file__).resolve().parent))
