"""Allow ``python -m biascorr`` as an alias for the console script."""

import sys

from biascorr.cli import main

if __name__ == "__main__":
    sys.exit(main())
