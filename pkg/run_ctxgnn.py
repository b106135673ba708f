"""Command-line interface for the ContextGNN recommender."""
from __future__ import annotations

import sys

from ctxgnn.cli import main


if __name__ == "__main__":
    sys.exit(main())
