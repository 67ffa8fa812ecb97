#!/usr/bin/env python3
"""
Blockpost - Piecewise Constant Posterior
=========================================
main entry point, checks the stack is installed then hands off to the cli

usage:
    python main.py fit --simulate scenarios/example2.json --out-dir out
    python main.py oracle --input small.csv --sigma2 1
"""

import os
import sys

# add the app directory to path so imports work
APP_DIR = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, APP_DIR)


def check_dependencies():
    """
    make sure the required packages are installed
    tqdm and psutil are optional, we just run without them
    """
    missing = []

    try:
        import numpy
    except ImportError:
        missing.append("numpy")

    try:
        import scipy
    except ImportError:
        missing.append("scipy")

    if missing:
        print("=" * 50, file=sys.stderr)
        print("Missing these packages:", file=sys.stderr)
        for pkg in missing:
            print(f"  - {pkg}", file=sys.stderr)
        print("\nRun this to fix it:", file=sys.stderr)
        print(f"  pip install {' '.join(missing)}", file=sys.stderr)
        print("=" * 50, file=sys.stderr)
        return False

    return True


def main():
    if not check_dependencies():
        sys.exit(1)

    from core.fit_runner import main as run_cli
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
