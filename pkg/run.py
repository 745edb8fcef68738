#!/usr/bin/env python3
"""
Run the maniploc command line from a source checkout without installing.

    ./run.py synthesize --config run.json
    ./run.py train --config run.json --run-dir runs/micro
    ./run.py infer --checkpoint runs/micro/best.ckpt --image photo.png
"""

import sys
from pathlib import Path

# Source checkout root, so ``maniploc`` imports without an install
sys.path.insert(0, str(Path(__file__).resolve().parent))

from maniploc.main import main

if __name__ == "__main__":
    sys.exit(main())
