"""Fundamental traffic diagrams of ring roads from min-plus, control and game models.

The command-line entry point is ``ringflow.cli.main``.
"""
