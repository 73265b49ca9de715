"""Entry point for the mctk command."""

import sys

from mctk.cli import main

if __name__ == "__main__":
    sys.exit(main())
