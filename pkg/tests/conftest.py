import sys
from pathlib import Path

# Test-local helpers (oracles) importable without packaging them.
sys.path.insert(0, str(Path(__file__).parent))
