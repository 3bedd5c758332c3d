#!/usr/bin/env python3
"""Check every analytical gradient against central differences.

Runs the loss-level and pipeline-level suites and exits nonzero if any
configuration misses the tolerance. Extra arguments are passed through,
so `run_gradcheck.py --tolerance 1e-7` tightens the bar.
"""

import sys

from vicreg.cli import main

if __name__ == "__main__":
    sys.exit(main(["gradcheck", *sys.argv[1:]]))
