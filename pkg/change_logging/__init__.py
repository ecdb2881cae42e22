"""Run logs: text journal, metrics and configuration changes."""
