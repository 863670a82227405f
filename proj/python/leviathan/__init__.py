"""Leviathan embedding-generator toolkit: coordinates, splines, parameter
accounting, scaling-law analysis and the command line, from Python."""

from ._leviathan import *  # noqa: F401,F403
from ._leviathan import __doc__  # noqa: F401


def main(argv=None):
    import sys

    code, out, err = run_cli(list(sys.argv[1:] if argv is None else argv))  # noqa: F405
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
