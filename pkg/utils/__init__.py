"""
Utility modules.
"""

from .config import Config, RunConfig

__all__ = [
    'Config',
    'RunConfig',
]
