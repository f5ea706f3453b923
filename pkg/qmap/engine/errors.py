from typing import Optional, Sequence


class ShapeError(ValueError):
    """Raised when a tensor does not fit the layer it is fed to"""

    def __init__(self, message: str, layer: Optional[str] = None,
                 expected: Optional[Sequence[int]] = None, actual: Optional[Sequence[int]] = None):
        self.layer = layer
        self.expected = tuple(expected) if expected is not None else None
        self.actual = tuple(actual) if actual is not None else None
        details = []
        if layer is not None:
            details.append(f'layer {layer}')
        if expected is not None:
            details.append(f'expected {self.expected}')
        if actual is not None:
            details.append(f'got {self.actual}')
        super().__init__(f'{message} ({", ".join(details)})' if details else message)
