#!/usr/bin/env python3
"""Thin wrapper to run the CLI as `python -m s2d`."""
import sys

from s2d import main as cli_main

if __name__ == '__main__':
    sys.exit(cli_main())
