"""Manifest I/O, frame decoding and the synthetic avatar generator."""
