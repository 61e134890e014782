import sys
from pathlib import Path

import torch

# Test helpers (gradcheck, oracles) live beside the tests.
sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)
