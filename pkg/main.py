"""Entry point for the conc-lab command line."""

import sys

from conc_lab.bootstrap import configure_logging
from conc_lab.cli import main as run_main

if __name__ == "__main__":
    configure_logging()
    sys.exit(run_main())
