import enum


class Relabel(str, enum.Enum):
    ALL_GOALS = 'all-goals'
    RANDOM_GOAL = 'random-goal'


class ExplorePolicy(str, enum.Enum):
    RANDOM = 'random'
    RANDOM_GOAL = 'random-goal'
    COMBINED = 'combined'


class TrajectoryEnd(str, enum.Enum):
    REACHED = 'reached'
    BUDGET = 'budget'
    # episode budget of the environment ran out first
    TRUNCATED = 'truncated'


class Command(str, enum.Enum):
    GEN = 'gen'
    TRAIN = 'train'
    EVAL = 'eval'
    EXPLORE = 'explore'
    RENDER = 'render'
