#!/usr/bin/env python3
"""
Entry point for the graphon SIS experiment runner.
This script dispatches to the experiment command group.
"""

from graphon_sis.commands import cli

if __name__ == '__main__':
    cli()
