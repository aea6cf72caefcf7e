import sys

from chemotaxis_fv.cli_io import dispatch

if __name__ == "__main__":
    sys.exit(dispatch(sys.argv[1:]))
