from pathlib import Path
from typing import Optional

import numpy as np

from qmap.envs.base import Action, Cell
from qmap.envs.level_io import write_ppm
from qmap.envs.render import BLACK, BLUE, GREEN, RED, WHITE, YELLOW

ACTION_COLORS = {
    Action.UP: RED,
    Action.DOWN: GREEN,
    Action.LEFT: BLUE,
    Action.RIGHT: YELLOW,
}


def _matching_walls(walls: Optional[np.ndarray], extent) -> Optional[np.ndarray]:
    if walls is None or walls.shape != tuple(extent):
        return None
    return walls


def max_qframe_heatmap(qframes: np.ndarray, walls: Optional[np.ndarray] = None) -> np.ndarray:
    """Grayscale of the max over actions, clipped to [0, 1]; walls stay black"""
    best = np.clip(qframes.max(axis=0), 0.0, 1.0).astype(np.float32)
    frame = np.repeat(best[None], 3, axis=0)
    walls = _matching_walls(walls, best.shape)
    if walls is not None:
        frame[:, walls] = 0.0
    return frame


def greedy_action_map(qframes: np.ndarray, walls: Optional[np.ndarray] = None,
                      agent: Optional[Cell] = None) -> np.ndarray:
    """One color per greedy first action towards each goal cell"""
    greedy = qframes.argmax(axis=0)
    palette = np.array([ACTION_COLORS[action] for action in Action], dtype=np.float32)
    frame = palette[greedy].transpose(2, 0, 1).copy()
    walls = _matching_walls(walls, greedy.shape)
    if walls is not None:
        frame[:, walls] = np.asarray(BLACK, dtype=np.float32)[:, None]
    if agent is not None and walls is not None:
        frame[:, agent[0], agent[1]] = WHITE
    return frame


def write_heatmap(path, qframes: np.ndarray, walls: Optional[np.ndarray] = None) -> Path:
    return write_ppm(path, max_qframe_heatmap(qframes, walls))


def write_action_map(path, qframes: np.ndarray, walls: Optional[np.ndarray] = None,
                     agent: Optional[Cell] = None) -> Path:
    return write_ppm(path, greedy_action_map(qframes, walls, agent))
