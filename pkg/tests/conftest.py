import sys
from pathlib import Path

# make the oracle/fixture helper packages importable from any test
sys.path.insert(0, str(Path(__file__).parent))
