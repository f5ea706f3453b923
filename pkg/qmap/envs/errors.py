class LevelError(ValueError):
    """Invalid level extents, cell coordinates or environment state"""


class GenerationError(RuntimeError):
    """A procedural generator exhausted its retry budget"""
