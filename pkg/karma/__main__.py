"""Entry point for running karma CLI application."""

import sys

from karma.cli import main

if __name__ == "__main__":
    sys.exit(main())
