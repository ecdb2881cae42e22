"""F5C backbone, temporal identity head and checkpoints."""
