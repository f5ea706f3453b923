import numpy as np
import pandas as pd
import pytest

from qmap.envs.base import Action
from qmap.envs.level_io import read_ppm
from qmap.envs.render import BLACK, GREEN, RED, WHITE
from qmap.utils.file_utils import clean_filename, ensure_directory_exists, level_filename, list_level_files
from qmap.utils.images import greedy_action_map, max_qframe_heatmap, write_heatmap
from qmap.utils.metrics import MetricsLog, write_coverage_curves


def test_heatmap_clips_and_blacks_out_walls(tmp_path):
    qframes = np.zeros((4, 2, 2))
    qframes[1] = [[0.5, 2.0], [-1.0, 0.25]]
    walls = np.array([[False, False], [False, True]])
    frame = max_qframe_heatmap(qframes, walls)
    np.testing.assert_allclose(frame[0], [[0.5, 1.0], [0.0, 0.0]])
    assert frame.shape == (3, 2, 2)
    stored = read_ppm(write_heatmap(tmp_path / 'heat.ppm', qframes, walls))
    assert stored[0, 0, 1] == 1.0


def test_action_map_colors():
    qframes = np.zeros((4, 1, 3))
    qframes[Action.DOWN, 0, 1] = 1.0
    walls = np.array([[False, False, True]])
    frame = greedy_action_map(qframes, walls, agent=(0, 0))
    assert tuple(frame[:, 0, 0]) == WHITE
    assert tuple(frame[:, 0, 1]) == GREEN
    assert tuple(frame[:, 0, 2]) == BLACK
    # without walls the agent is not marked
    assert tuple(greedy_action_map(qframes, agent=(0, 0))[:, 0, 0]) == RED


def test_metrics_round_trip(tmp_path):
    log = MetricsLog(seed=3)
    log.record(10, {'loss': 0.5, 'success_rate': 0.25})
    log.record(20, {'success_rate': 0.75})
    loaded = MetricsLog.read_csv(log.write_csv(tmp_path / 'metrics.csv'))
    assert loaded.seed == 3
    assert loaded.latest('success_rate') == 0.75
    assert list(loaded.to_frame().columns) == ['step', 'metric_name', 'value', 'seed']
    with pytest.raises(KeyError):
        loaded.latest('wall_value')


def test_coverage_curves_concatenate(tmp_path):
    curves = [pd.DataFrame({'step': [1, 2], 'unique_cells': [1, 2], 'seed': s}) for s in (0, 1)]
    frame = pd.read_csv(write_coverage_curves(tmp_path / 'curves.csv', curves))
    assert len(frame) == 4 and sorted(frame['seed'].unique()) == [0, 1]


def test_file_helpers(tmp_path):
    assert clean_filename('scaled-maze qmap:v1') == 'scaled-maze_qmap_v1'
    assert level_filename(7) == 'level_00007.level'
    directory = tmp_path / 'levels' / 'train'
    assert ensure_directory_exists(str(directory))
    for index in (2, 0, 1):
        (directory / level_filename(index)).write_text('')
    (directory / 'notes.txt').write_text('')
    assert [path.name for path in list_level_files(str(directory))] == [level_filename(i) for i in range(3)]
