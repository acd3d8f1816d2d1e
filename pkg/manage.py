#!/usr/bin/env python
"""Command-line utility for pricing runs."""
import sys


def main():
    """Run a pricing command."""
    try:
        from jumpput.cli import main as run
    except ImportError as exc:
        raise ImportError(
            "Couldn't import the solver dependencies. Are numpy, scipy and numba "
            "installed and available on your PYTHONPATH? Did you forget to "
            "activate a virtual environment?"
        ) from exc
    return run(sys.argv[1:])


if __name__ == '__main__':
    sys.exit(main())
