"""
Main entry point for pcaboost.

This script runs the command-line interface from the 'pcaboost' package.
"""
import sys

from pcaboost.cli import main


if __name__ == "__main__":
    sys.exit(main())
