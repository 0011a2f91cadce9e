"""Ensembles, rate fits, continuity probes and batch experiments."""
