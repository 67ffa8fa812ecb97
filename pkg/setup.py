#!/usr/bin/env python3
"""
Blockpost - Setup Script
=========================
installs python deps and runs a quick smoke fit to make sure everything works

just run: python setup.py
"""

import os
import subprocess
import sys


def print_header(text):
    """print a header"""
    print("\n" + "=" * 60)
    print(f"  {text}")
    print("=" * 60 + "\n")


def run_command(cmd, description):
    """run a command and show status"""
    print(f"  [{description}]...")
    try:
        result = subprocess.run(cmd, shell=True, capture_output=True, text=True)
        if result.returncode == 0:
            print("    done")
            return True
        print(f"    failed: {result.stderr[:200]}")
        return False
    except Exception as e:
        print(f"    error: {e}")
        return False


def main():
    print_header("BLOCKPOST SETUP")

    print(f"Python version: {sys.version}")
    if sys.version_info < (3, 8):
        print("ERROR: Need Python 3.8 or higher")
        sys.exit(1)

    # 1. install python dependencies
    print_header("Installing Python packages")
    root = os.path.dirname(os.path.abspath(__file__))
    requirements_path = os.path.join(root, "requirements.txt")
    if os.path.exists(requirements_path):
        run_command(f'"{sys.executable}" -m pip install -r "{requirements_path}"', "Installing requirements")
    else:
        print("  requirements.txt not found, skipping")

    # 2. smoke fit on a tiny scenario
    print_header("Smoke test")
    scenario = os.path.join(root, "scenarios", "rate_shape.json")
    out_dir = os.path.join(root, "blockpost_out", "smoke")
    run_command(
        f'"{sys.executable}" "{os.path.join(root, "main.py")}" fit --simulate "{scenario}" '
        f'--iters 2000 --burnin 500 --thin 5 --out-dir "{out_dir}"',
        "Running a short fit",
    )

    print_header("SETUP COMPLETE")
    print("  fit:      python main.py fit --simulate scenarios/example2.json --out-dir out")
    print("  oracle:   python main.py oracle --input small.csv --sigma2 1 --out-dir out")
    print("  study:    python main.py study --simulate scenarios/rate_shape.json --out-dir out")
    print("  tests:    ./run.sh test")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        # invoked by pip/setuptools with a build command; metadata lives in pyproject.toml
        from setuptools import setup

        setup()
    else:
        main()
