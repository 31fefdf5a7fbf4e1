import sys

from src.ifgkit.cli.core import dispatch

if __name__ == '__main__':
    sys.exit(dispatch())
