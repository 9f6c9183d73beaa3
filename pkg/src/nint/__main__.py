"""Allow ``python -m nint`` as an alias for the ``nint`` console script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
