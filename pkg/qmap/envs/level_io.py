"""Plain-text level files and binary PPM frame dumps.

Level file layout::

    maze 16 16 7
    ################
    #@.....#.......#
    ...

The header holds kind, width, height and seed (``-`` when unknown).
"""
import logging
from pathlib import Path
from typing import Tuple

import numpy as np
from PIL import Image

from qmap.envs.base import EnvState, GridLevel, LevelKind, validate_state
from qmap.envs.errors import LevelError

logger = logging.getLogger(__name__)

WALL = '#'
PATH = '.'
AGENT = '@'
BOX = '$'
COIN = 'o'


def level_to_text(level: GridLevel, state: EnvState) -> str:
    seed = '-' if level.seed is None else str(level.seed)
    rows = [f'{level.kind.value} {level.width} {level.height} {seed}']
    for r in range(level.height):
        line = []
        for c in range(level.width):
            cell = (r, c)
            if level.walls[cell]:
                line.append(WALL)
            elif cell == state.agent:
                line.append(AGENT)
            elif cell == state.box:
                line.append(BOX)
            elif state.coins is not None and state.coins[cell]:
                line.append(COIN)
            else:
                line.append(PATH)
        rows.append(''.join(line))
    return '\n'.join(rows) + '\n'


def level_from_text(text: str) -> Tuple[GridLevel, EnvState]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise LevelError('empty level file')
    header = lines[0].split()
    if len(header) != 4:
        raise LevelError(f'bad level header {lines[0]!r}; expected "kind width height seed"')
    try:
        kind = LevelKind(header[0])
        width, height = int(header[1]), int(header[2])
    except ValueError as e:
        raise LevelError(f'bad level header {lines[0]!r}: {e}')
    seed = None if header[3] == '-' else int(header[3])
    grid = lines[1:]
    if len(grid) != height or any(len(line) != width for line in grid):
        raise LevelError(f'level body does not match {width}x{height}')

    walls = np.zeros((height, width), dtype=bool)
    coins = np.zeros((height, width), dtype=bool)
    agent = box = None
    for r, line in enumerate(grid):
        for c, char in enumerate(line):
            if char == WALL:
                walls[r, c] = True
            elif char == AGENT:
                if agent is not None:
                    raise LevelError('more than one agent in level file')
                agent = (r, c)
            elif char == BOX:
                if box is not None:
                    raise LevelError('more than one box in level file')
                box = (r, c)
            elif char == COIN:
                coins[r, c] = True
            elif char != PATH:
                raise LevelError(f'unknown level character {char!r} at ({r}, {c})')
    if agent is None:
        raise LevelError('level file has no agent')

    level = GridLevel(walls=walls, kind=kind, seed=seed)
    state = EnvState(agent=agent, box=box, coins=coins if kind == LevelKind.COVERAGE else None)
    validate_state(level, state)
    return level, state


def write_level(path, level: GridLevel, state: EnvState) -> Path:
    path = Path(path)
    path.write_text(level_to_text(level, state))
    return path


def read_level(path) -> Tuple[GridLevel, EnvState]:
    return level_from_text(Path(path).read_text())


def frame_to_image(frame: np.ndarray) -> Image.Image:
    """Channels-first [0, 1] RGB frame to an 8-bit image, round(255 v)"""
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise ValueError(f'expected a (3, H, W) frame, got {frame.shape}')
    pixels = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    return Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)))


def write_ppm(path, frame: np.ndarray) -> Path:
    """Binary P6 dump of a frame"""
    path = Path(path)
    frame_to_image(frame).save(path, format='PPM')
    return path


def read_ppm(path) -> np.ndarray:
    with Image.open(path) as image:
        pixels = np.asarray(image.convert('RGB'), dtype=np.float32)
    return pixels.transpose(2, 0, 1) / 255.0
