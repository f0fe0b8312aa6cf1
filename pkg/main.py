"""
This script serves as the main entry point for the qjc application.

Run ``python main.py --help`` (or the installed ``qjc`` command) for the list
of subcommands.
"""

import sys

from src.core.cli import main

if __name__ == "__main__":
    sys.exit(main())
