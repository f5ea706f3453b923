import numpy as np
import pytest

from qmap.envs.base import EnvState, GridLevel, LevelKind
from qmap.models.layer import LayerKind, OutputKind, Padding
from qmap.schemas.layer import ArchitectureSpec, LayerSpec


def parse_grid(rows, kind=LevelKind.MAZE):
    """'#' walls, '@' agent, '$' box, anything else floor"""
    walls = np.array([[char == '#' for char in row] for row in rows], dtype=bool)
    agent = box = None
    for r, row in enumerate(rows):
        for c, char in enumerate(row):
            if char == '@':
                agent = (r, c)
            elif char == '$':
                box = (r, c)
    return GridLevel(walls=walls, kind=kind), EnvState(agent=agent, box=box)


L_CORRIDOR = [
    '#####',
    '#@..#',
    '###.#',
    '###.#',
    '#####',
]

SOKOBAN_CORRIDOR = [
    '#######',
    '#@$...#',
    '#######',
]

CORNER_DEADLOCK = [
    '#####',
    '#$..#',
    '#..@#',
    '#####',
]


@pytest.fixture
def l_corridor():
    return parse_grid(L_CORRIDOR)


@pytest.fixture
def sokoban_corridor():
    return parse_grid(SOKOBAN_CORRIDOR, LevelKind.SOKOBAN)


@pytest.fixture
def corner_deadlock():
    return parse_grid(CORNER_DEADLOCK, LevelKind.SOKOBAN)


def conv(filters, kernel, stride, padding=Padding.SAME):
    return LayerSpec(kind=LayerKind.CONV, filters=filters, kernel=kernel, stride=stride, padding=padding)


def deconv(filters, kernel, stride, padding=Padding.SAME):
    return LayerSpec(kind=LayerKind.DECONV, filters=filters, kernel=kernel, stride=stride, padding=padding)


def dense(units, reshape=None):
    return LayerSpec(kind=LayerKind.DENSE, filters=units, reshape=reshape)


ELU = LayerSpec(kind=LayerKind.ELU)


@pytest.fixture
def tiny_qmap_spec():
    """Dueling Q-frame network small enough for finite differences"""
    return ArchitectureSpec(
        name='tiny-qmap',
        input_shape=(3, 5, 5),
        torso=[conv(4, 3, 1), ELU],
        advantage=[deconv(4, 3, 1)],
        value=[conv(1, 3, 1)],
        output=OutputKind.QFRAMES,
    )


@pytest.fixture
def tiny_vector_spec():
    return ArchitectureSpec(
        name='tiny-vector',
        input_shape=(3, 5, 5),
        torso=[conv(4, 3, 2), ELU, dense(8), ELU],
        advantage=[dense(4)],
        value=[dense(1)],
        output=OutputKind.QVECTOR,
    )
