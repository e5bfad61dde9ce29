"""Experiment harness: recording, training, evaluation, plots and the command-line entry point."""
