"""
Command-line interface for the fake EC attribution pipeline.

This module provides the `ecattrib` entry point when the package is installed
via pip/uv. Subcommands are the scamgraph management commands:

    ecattrib ingest | group | refine | timeseries | attribute |
             indicators | synth | evaluate | export
"""

import os
import sys


def main(argv=None):
    """Dispatch to a pipeline subcommand."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'ecattrib.settings')

    try:
        import django
        from django.core.management import execute_from_command_line
    except ImportError as e:
        print(f"Error: Failed to import Django: {e}", file=sys.stderr)
        print("This should not happen. Please ensure Django is installed correctly.", file=sys.stderr)
        sys.exit(2)

    django.setup()

    argv = list(sys.argv if argv is None else argv)
    argv[0] = 'ecattrib'
    execute_from_command_line(argv)


if __name__ == '__main__':
    main()
