from .base import Action, Cell, EnvState, GridLevel, LevelKind, NUM_ACTIONS, move
from .errors import GenerationError, LevelError
from .maze import generate_padded_maze, maze_generate, maze_step, pad_level
from .sokoban import sokoban_generate, sokoban_step
from .coverage import coverage_step, coverage_world_generate
from .render import goal_conditioned_input, parse_maze_observation, render_observation
from .env import CoverageEnv, MazeEnv, SokobanEnv, StepResult

__all__ = [
    'Action', 'Cell', 'EnvState', 'GridLevel', 'LevelKind', 'NUM_ACTIONS', 'move',
    'GenerationError', 'LevelError',
    'generate_padded_maze', 'maze_generate', 'maze_step', 'pad_level',
    'sokoban_generate', 'sokoban_step',
    'coverage_step', 'coverage_world_generate',
    'goal_conditioned_input', 'parse_maze_observation', 'render_observation',
    'CoverageEnv', 'MazeEnv', 'SokobanEnv', 'StepResult'
]
