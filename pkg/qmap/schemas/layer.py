from pydantic import BaseModel, model_validator
from typing import List, Optional, Tuple

from qmap.models.layer import LayerKind, Padding, OutputKind


class LayerSpec(BaseModel):
    kind: LayerKind
    filters: int = 0  # units for dense
    kernel: int = 1
    stride: int = 1
    padding: Padding = Padding.SAME
    # dense only: reshape the output vector to (channels, height, width)
    reshape: Optional[Tuple[int, int, int]] = None

    class Config:
        frozen = True

    @model_validator(mode='after')
    def check_arguments(self) -> 'LayerSpec':
        if self.kind in (LayerKind.CONV, LayerKind.DECONV):
            if self.kernel < 1 or self.stride < 1:
                raise ValueError(f'{self.kind.value} needs kernel >= 1 and stride >= 1')
        if self.kind != LayerKind.ELU and self.filters < 1:
            raise ValueError(f'{self.kind.value} needs at least one filter/unit')
        if self.reshape is not None:
            if self.kind != LayerKind.DENSE:
                raise ValueError('reshape is only valid on dense layers')
            c, h, w = self.reshape
            if c * h * w != self.filters:
                raise ValueError(f'reshape {self.reshape} does not hold {self.filters} units')
        return self


class ArchitectureSpec(BaseModel):
    name: str
    input_shape: Tuple[int, int, int]
    torso: List[LayerSpec]
    advantage: List[LayerSpec]
    value: Optional[List[LayerSpec]] = None
    output: OutputKind
    num_actions: int = 4

    class Config:
        frozen = True

    @property
    def dueling(self) -> bool:
        return self.value is not None

    def branches(self) -> List[Tuple[str, List[LayerSpec]]]:
        """Named layer chains in evaluation order"""
        chains = [('torso', list(self.torso)), ('advantage', list(self.advantage))]
        if self.value is not None:
            chains.append(('value', list(self.value)))
        return chains

    @property
    def param_count(self) -> int:
        from qmap.engine.network import Network
        return Network(self).param_count()
