"""Objective, training, evaluation and reporting."""
