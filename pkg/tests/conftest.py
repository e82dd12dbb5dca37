import sys
from pathlib import Path

# shared helpers (kernel_harness) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))
