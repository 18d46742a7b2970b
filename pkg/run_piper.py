"""
Script entry point for running the command line without installing the package.
"""
import sys

from piper.cli import main

# Usage: python run_piper.py train --config configs/reach2d_ppo.json
if __name__ == '__main__':
    sys.exit(main())
