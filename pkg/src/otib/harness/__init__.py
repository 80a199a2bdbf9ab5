"""Experiment orchestration: configs, artifact store, pipeline, CLI."""
