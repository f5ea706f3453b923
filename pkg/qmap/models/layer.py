import enum


class LayerKind(str, enum.Enum):
    CONV = 'conv'
    DECONV = 'deconv'
    DENSE = 'dense'
    ELU = 'elu'


class Padding(str, enum.Enum):
    SAME = 'same'
    VALID = 'valid'


class OutputKind(str, enum.Enum):
    QFRAMES = 'qframes'
    QVECTOR = 'qvector'


class Which(str, enum.Enum):
    ONLINE = 'online'
    TARGET = 'target'
